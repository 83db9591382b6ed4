"""Per-process counters and simulated-time accumulators."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

OPERATIONS = (
    "fetch",
    "create_object",
    "create_group",
    "space_recovery",
    "rot_search",
    "incoming_message",
    "wait",
    "signal",
    "synchronise",
)

COUNTERS = (
    "messages_received",
    "messages_sent",
    "idle_ticks",
    "replicas_discarded_clean",
    "replicas_discarded_dirty",
    "prefetched_accepted",
    "prefetched_refused",
    "prefetched_unused",
    "prefetch_served",
    "execution_ticks",
)


@dataclass
class OpStat:
    count: int = 0
    total: int = 0
    min: int = 0
    max: int = 0

    def record(self, ticks: int) -> None:
        if self.count == 0:
            self.min = self.max = ticks
        else:
            self.min = min(self.min, ticks)
            self.max = max(self.max, ticks)
        self.count += 1
        self.total += ticks

    @property
    def avg(self) -> float:
        return self.total / self.count if self.count else 0.0


@dataclass
class StatsRecord:
    identity: str = ""
    ops: dict[str, OpStat] = field(default_factory=lambda: {op: OpStat() for op in OPERATIONS})
    counters: dict[str, int] = field(default_factory=lambda: dict.fromkeys(COUNTERS, 0))

    def op(self, name: str) -> OpStat:
        return self.ops[name]

    def bump(self, counter: str, n: int = 1) -> None:
        self.counters[counter] += n

    def __getitem__(self, key: str) -> int:
        return self.counters[key]

    def snapshot(self) -> "StatsRecord":
        return copy.deepcopy(self)

    def _combine(self, other: "StatsRecord", sign: int) -> "StatsRecord":
        # counts and totals combine; min/max keep the first operand's values
        out = self.snapshot()
        for name, st in out.ops.items():
            o = other.ops[name]
            st.count += sign * o.count
            st.total += sign * o.total
        for name in out.counters:
            out.counters[name] += sign * other.counters[name]
        return out

    def __sub__(self, other: "StatsRecord") -> "StatsRecord":
        return self._combine(other, -1)

    def __add__(self, other: "StatsRecord") -> "StatsRecord":
        return self._combine(other, +1)

    def row(self) -> dict[str, int | float | str]:
        """Flat mapping in stable column order (see ``csv_columns``)."""
        out: dict[str, int | float | str] = {"identity": self.identity}
        for name in OPERATIONS:
            st = self.ops[name]
            out[f"{name}.count"] = st.count
            out[f"{name}.total"] = st.total
            out[f"{name}.min"] = st.min
            out[f"{name}.max"] = st.max
        out.update(self.counters)
        return out

    def display(self) -> str:
        lines = [f"[{self.identity}]"]
        for name in OPERATIONS:
            st = self.ops[name]
            if st.count:
                lines.append(f"  {name:18s} n={st.count:<8d} total={st.total:<12d} "
                             f"min={st.min} max={st.max} avg={st.avg:.1f}")
        for name, v in self.counters.items():
            if v:
                lines.append(f"  {name:18s} {v}")
        return "\n".join(lines)


def csv_columns() -> list[str]:
    cols = ["identity"]
    for name in OPERATIONS:
        cols += [f"{name}.count", f"{name}.total", f"{name}.min", f"{name}.max"]
    cols += list(COUNTERS)
    return cols


def total(records: list[StatsRecord], identity: str = "total") -> StatsRecord:
    out = StatsRecord(identity=identity)
    for r in records:
        for name, st in r.ops.items():
            o = out.ops[name]
            if st.count:
                o.min = st.min if o.count == 0 else min(o.min, st.min)
                o.max = max(o.max, st.max)
            o.count += st.count
            o.total += st.total
        for name, v in r.counters.items():
            out.counters[name] += v
    return out


__all__ = ["OpStat", "StatsRecord", "OPERATIONS", "COUNTERS", "csv_columns", "total"]
