"""Experiment runner: one flat config in, CSV rows out."""
from __future__ import annotations

import csv
import dataclasses
import enum
import io
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from .costs import CostModel, PrefetchPriority
from .fabric import FabricConfig
from .ids import MovementContext
from .recovery import Strategy
from .stats import csv_columns, total
from .system import Machine, MachineConfig
from .workloads import btree, nbody, octree, pluck
from .workloads.common import GroupParams

WORKLOADS = ("btree", "n2", "octree", "pluck")


@dataclass
class RunConfig:
    workload: str = "n2"
    num_clients: int = 1
    num_servers: int = 1
    cache_bytes: int = 3_000_000
    segment_bytes: int = 50_000
    directory_entries: int = 50
    object_fill: int = 0
    strategy: Strategy = Strategy.CLASSIFIED
    creation_strategy: Strategy | None = None  # used until the first phase after "create"
    movement_context: MovementContext = MovementContext.SINGLE
    group_width: int = 1
    prefetch_depth: int = 0
    prefetch_priority: PrefetchPriority = PrefetchPriority.HIGH
    seed: int = 0
    # workload sizes
    num_particles: int = 200
    time_steps: int = 1
    theta: float = 0.5
    parallel: bool = False
    active_particles: int | None = None
    num_inserts: int = 1000
    num_searches: int = 5000
    key_range: int = 1 << 20
    num_points: int = 2000
    # fabric & processing costs
    latency: int = 1350
    per_byte_cost: float = 0.45
    jitter: int = 0
    server_message: int = 60
    client_message: int = 60
    check: bool = True

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            setattr(self, f.name, _coerce(f.name, getattr(self, f.name)))
        if self.workload not in WORKLOADS:
            raise ValueError(f"unknown workload {self.workload!r}; one of {WORKLOADS}")
        for name in ("num_clients", "num_servers", "cache_bytes", "segment_bytes",
                     "directory_entries", "group_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.group_width > self.num_servers:
            raise ValueError("group_width cannot exceed num_servers")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.name if isinstance(v, enum.Enum) else v
        return out


_HINTS: dict[str, Any] = {}


def _hints() -> dict[str, Any]:
    if not _HINTS:
        _HINTS.update(typing.get_type_hints(RunConfig))
    return _HINTS


def _coerce(name: str, value):
    hint = _hints()[name]
    args = typing.get_args(hint)
    if args and type(None) in args:
        if value is None or (isinstance(value, str) and value.lower() in ("", "none")):
            return None
        hint = next(a for a in args if a is not type(None))
    if isinstance(value, hint):
        return value
    if not isinstance(value, str):
        if hint is float and isinstance(value, int):
            return float(value)
        if hint is MovementContext:
            return MovementContext(value)
        raise TypeError(f"{name}: expected {hint.__name__}, got {value!r}")
    if hint is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: not a boolean: {value!r}")
    if hint is int:
        return int(value, 0)
    if hint is MovementContext:
        return MovementContext[value.strip().upper()]
    if isinstance(hint, type) and issubclass(hint, (Strategy, PrefetchPriority)):
        return hint(value.strip().upper())
    return hint(value.strip())


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def make_config(pairs: dict[str, str] | None = None, **kw) -> RunConfig:
    merged = dict(pairs or {})
    merged.update(kw)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    bad = set(merged) - known
    if bad:
        raise ValueError(f"unknown config keys: {sorted(bad)}")
    return RunConfig(**merged)


def load_config(path: str, overrides: list[str] = ()) -> RunConfig:
    with open(path) as fh:
        pairs = parse_config_text(fh.read())
    pairs.update(parse_config_text("\n".join(overrides)))
    return make_config(pairs)


# -- running ----------------------------------------------------------------

def machine_config(cfg: RunConfig) -> MachineConfig:
    return MachineConfig(
        num_clients=cfg.num_clients, num_servers=cfg.num_servers, cache_bytes=cfg.cache_bytes,
        segment_bytes=cfg.segment_bytes, directory_entries=cfg.directory_entries,
        strategy=cfg.strategy, prefetch=cfg.prefetch_priority,
        costs=CostModel(server_message=cfg.server_message, client_message=cfg.client_message),
        fabric=FabricConfig(latency=cfg.latency, per_byte_cost=cfg.per_byte_cost,
                            seed=cfg.seed, jitter=cfg.jitter))


def workload_program(cfg: RunConfig):
    group = GroupParams(cfg.movement_context, cfg.group_width, cfg.prefetch_depth)
    if cfg.workload == "btree":
        return btree.program(btree.BTreeConfig(
            num_inserts=cfg.num_inserts, num_searches=cfg.num_searches, key_range=cfg.key_range,
            object_fill=cfg.object_fill, group=group, seed=cfg.seed))
    if cfg.workload == "n2":
        return nbody.program(nbody.N2Config(
            num_particles=cfg.num_particles, time_steps=cfg.time_steps,
            object_fill=cfg.object_fill, group=group, seed=cfg.seed))
    if cfg.workload == "octree":
        return octree.program(octree.OctTreeConfig(
            num_particles=cfg.num_particles, time_steps=cfg.time_steps, theta=cfg.theta,
            object_fill=cfg.object_fill, parallel=cfg.parallel,
            active_particles=cfg.active_particles, group=group, seed=cfg.seed))
    return pluck.program(pluck.PluckConfig(
        num_points=cfg.num_points, time_steps=cfg.time_steps, object_fill=cfg.object_fill,
        group=group, seed=cfg.seed))


def summarise_output(cfg: RunConfig, results: list) -> dict[str, Any]:
    if cfg.workload == "pluck":
        return pluck.combine(results)
    if cfg.workload == "btree":
        return {"digest": results[0]["checksum"], **results[0]}
    return results[0]


@dataclass
class RunResult:
    cfg: RunConfig
    rows: list[dict[str, Any]]
    output: dict[str, Any]
    machine: Machine = field(repr=False)

    @property
    def summary(self) -> dict[str, Any]:
        return self.rows[-1]

    def client_total(self):
        return total(self.machine.client_stats(), "clients")


def run_experiment(cfg: RunConfig) -> RunResult:
    machine = Machine(machine_config(cfg))
    if cfg.creation_strategy is not None:
        for store in machine.stores:
            store.lom.strategy = cfg.creation_strategy
            for phase in ("simulate", "search", "build"):
                store.phase_strategies[phase] = cfg.strategy
    results = machine.run(workload_program(cfg))
    if cfg.check:
        for lom in machine.loms:
            lom.check()
        if not machine.terminated:
            raise RuntimeError("servers did not all terminate")
    output = summarise_output(cfg, results)
    echo = cfg.echo()
    rows = []
    records = machine.all_stats()
    for rec in records:
        rows.append({**echo, **rec.row(), "memory_access_ratio": "", "digest": ""})
    clients = machine.loms
    ratio = sum(l.access_bytes for l in clients) / len(clients) / cfg.cache_bytes
    summary = total(records, "total").row()
    rows.append({**echo, **summary, "memory_access_ratio": round(ratio, 6),
                 "digest": output.get("digest", "")})
    return RunResult(cfg, rows, output, machine)


def columns() -> list[str]:
    return [f.name for f in dataclasses.fields(RunConfig)] + csv_columns() + \
        ["memory_access_ratio", "digest"]


def to_csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns(), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _run_rows(cfg: RunConfig) -> list[dict[str, Any]]:
    return run_experiment(cfg).rows


def sweep(template: RunConfig, axis: str, values: list, jobs: int = 1
          ) -> list[dict[str, Any]]:
    """Run ``template`` once per value of ``axis``; rows are concatenated."""
    cfgs = [make_config({**template.echo(), axis: v})
            for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            batches = list(ex.map(_run_rows, cfgs))
    else:
        batches = [_run_rows(c) for c in cfgs]
    return [row for batch in batches for row in batch]
