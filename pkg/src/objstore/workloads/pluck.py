"""Plucked string: block decomposition with semaphore-guarded block ends.

Each element has two copies.  At every step the copies swap roles: ``prev``
holds the latest positions and ``curr`` is overwritten with the next ones,
using the position two steps back that it still contains::

    x_new[i] = 2 prev[i] - curr[i] + c (prev[i-1] - 2 prev[i] + prev[i+1])

with ``c = dt^2 K / m``.  Both string ends are fixed.

Block ends are read by the neighbouring clients.  Nobody holds one lock
while waiting for another: a reader polls a neighbour's end until it carries
the wanted step and then records that it has read it, and an owner polls its
own end until the old value has been read before overwriting it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .common import GroupParams, block_range, check_fill, digest_floats

ELEMENT = "<dqq"    # value | step it belongs to | last step a neighbour read it
ELEMENT_BYTES = 24
REGISTRY = "pluck.registry"


@dataclass
class PluckConfig:
    num_points: int = 50_000
    time_steps: int = 20
    spring_const: float = 1.0
    mass_per_element: float = 1.0
    dt: float = 0.5
    pluck_position: float = 0.3
    pluck_amplitude: float = 0.01
    object_fill: int = 0
    compute_ticks: int = 10
    poll_ticks: int = 500   # pause before retrying a block end that is not ready
    group: GroupParams = field(default_factory=GroupParams)
    seed: int = 0

    @property
    def coupling(self) -> float:
        return self.dt * self.dt * self.spring_const / self.mass_per_element


def initial_shape(cfg: PluckConfig) -> list[float]:
    """Triangular pluck, zero at both fixed ends, at rest."""
    n = cfg.num_points
    peak = min(max(int(round(cfg.pluck_position * (n - 1))), 1), n - 2)
    shape = []
    for i in range(n):
        if i <= peak:
            shape.append(cfg.pluck_amplitude * i / peak)
        else:
            shape.append(cfg.pluck_amplitude * (n - 1 - i) / (n - 1 - peak))
    shape[0] = shape[-1] = 0.0
    return shape


def program(cfg: PluckConfig):
    fill = check_fill(cfg.object_fill)
    n = cfg.num_points
    c = cfg.coupling
    x0 = initial_shape(cfg)

    def run(api):
        k = api.num_clients
        me = api.identity
        lo, hi = block_range(n, k, me)
        if hi - lo < 2:
            raise ValueError(f"client {me}: block of {hi - lo} elements, need at least 2")
        api.phase("create")
        g = cfg.group.create(api)
        if me == 0:
            reg = api.create_object(g, 0, 4 * k)
            api.name_object(REGISTRY, reg)
            del reg
        api.synchronise()
        reg = api.object_named(REGISTRY)
        # copy 0 starts as x(0), copy 1 as x(-1); equal because the string is at rest
        copies = []
        for _ in range(2):
            objs = []
            for i in range(lo, hi):
                e = api.create_object(g, ELEMENT_BYTES + fill, 0)
                api.pack(e, ELEMENT, 0, x0[i], 0, 0)
                objs.append(e)
            copies.append(objs)
        # copy 1 holds x(-1), which no neighbour ever reads
        for e in copies[1]:
            api.pack(e, "<q", 8, -1)
        ends = (copies[0][0], copies[0][-1], copies[1][0], copies[1][-1])
        for e in ends:
            # a signal carries the initial value to the server for the neighbours
            api.wait(e)
            api.signal(e)
        api.wait(reg)
        for slot, e in enumerate(ends):
            api.assign(api.index(reg, 4 * me + slot), e)
        api.signal(reg)
        api.synchronise()
        # neighbour block ends, indexed by copy number
        api.wait(reg)
        left_nb = right_nb = None
        if me > 0:
            left_nb = [api.read_ref(api.index(reg, 4 * (me - 1) + s)) for s in (1, 3)]
        if me < k - 1:
            right_nb = [api.read_ref(api.index(reg, 4 * (me + 1) + s)) for s in (0, 2)]
        api.signal(reg)
        del reg

        def fetch_end(e, step):
            """Value of a neighbour's end for ``step - 1``; marks it read."""
            while True:
                api.wait(e)
                v, at, _ = api.unpack(e, ELEMENT)
                if at == step - 1:
                    api.pack(e, "<q", 16, step)
                    api.signal(e)
                    return v
                api.signal(e)
                api.compute(cfg.poll_ticks)

        def store_end(e, step, value, read):
            """Overwrite an own end once the neighbour has read the old value."""
            while True:
                api.wait(e)
                if not read or api.unpack(e, "<q", 16)[0] >= step - 1:
                    api.pack(e, "<dq", 0, value, step)
                    api.signal(e)
                    return
                api.signal(e)
                api.compute(cfg.poll_ticks)

        api.phase("simulate")
        t_start = api.current_stats()
        clock0 = api.clock
        cur, prv = 0, 1
        m = hi - lo
        for step in range(1, cfg.time_steps + 1):
            cur, prv = prv, cur
            prev, curr = copies[prv], copies[cur]
            p = [api.unpack(e, "<d")[0] for e in prev]
            new = [api.unpack(e, "<d")[0] for e in curr]

            def advance(j, pl, pr):
                i = lo + j
                if 0 < i < n - 1:
                    new[j] = 2.0 * p[j] - new[j] + c * (pl - 2.0 * p[j] + pr)
                    api.compute(cfg.compute_ticks)

            # interior first, giving the neighbours time to publish their ends
            for j in range(1, m - 1):
                advance(j, p[j - 1], p[j + 1])
            left = fetch_end(left_nb[prv], step) if left_nb else None
            right = fetch_end(right_nb[prv], step) if right_nb else None
            advance(0, left, p[1])
            advance(m - 1, p[m - 2], right)
            for j in range(1, m - 1):
                api.pack(curr[j], "<dq", 0, new[j], step)
            store_end(curr[0], step, new[0], me > 0)
            store_end(curr[-1], step, new[-1], me < k - 1)
        t_end = api.current_stats()
        sim_ticks = api.clock - clock0
        block = [api.unpack(e, "<d")[0] for e in copies[cur]]
        coherence = sum((t_end - t_start).ops[op].total for op in ("wait", "signal"))
        return {"lo": lo, "values": block, "coherence_ticks": coherence, "sim_ticks": sim_ticks}

    return run


def combine(results: list[dict]) -> dict:
    """Stitch the per-client blocks into the whole string."""
    values = [v for r in sorted(results, key=lambda r: r["lo"]) for v in r["values"]]
    return {"digest": digest_floats(values), "values": values,
            "coherence_ticks": [r["coherence_ticks"] for r in results],
            "sim_ticks": [r["sim_ticks"] for r in results]}
