"""Acceptance checks for the object server, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line.  Run with
``python3 tests/test_acceptance.py`` to get just those lines.
"""
from __future__ import annotations

import math
import random
import sys
import time

import numpy as np
import pytest

from objstore import Machine
from objstore.fabric import FabricConfig, Kind
from objstore.system import MachineConfig
from objstore.harness import make_config, run_experiment
from objstore.messages import Tag
from objstore.recovery import target_bytes
from objstore.ids import ObjectId
from objstore.rot import ResidentObjectTable
from objstore.storage import object_extent
from objstore.workloads import nbody, octree, oracles, pluck
from objstore.workloads.common import initial_particles

STRATEGIES = ("DUMP", "SIMPLE_LRU", "CLASSIFIED")


def report(n: int, ok: bool, detail: str) -> None:
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}", flush=True)


def client_row(result):
    return result.machine.client_stats()[0]


# -- 1 ----------------------------------------------------------------------

N2_PARTICLES = 200
N2_FILL = 800
N2_SEGMENT = 4000


def n2_cache(ratio: float, fill: int = N2_FILL) -> int:
    # particle list + update list (8 bytes a slot) and both particle sets
    touched = 2 * N2_PARTICLES * 8 + 2 * N2_PARTICLES * (56 + fill)
    return int(touched / ratio)


def n2_run(cache: int, strategy: str, fill: int = N2_FILL, creation=None):
    return run_experiment(make_config(
        workload="n2", num_particles=N2_PARTICLES, object_fill=fill, cache_bytes=cache,
        segment_bytes=N2_SEGMENT, strategy=strategy, creation_strategy=creation))


def criterion_1():
    t0 = time.time()
    runs = {s: n2_run(n2_cache(1.5), s) for s in STRATEGIES}
    fetch = {s: r.summary["fetch.count"] for s, r in runs.items()}
    ratios = [r.summary["memory_access_ratio"] for r in runs.values()]
    took = time.time() - t0
    ok = (fetch["DUMP"] >= 1.25 * fetch["SIMPLE_LRU"] and fetch["DUMP"] >= 1.25 * fetch["CLASSIFIED"]
          and all(abs(x - 1.5) <= 0.15 for x in ratios) and took < 60)
    return ok, f"fetches {fetch}, access ratio {ratios[0]}, {took:.1f}s"


# -- 2 ----------------------------------------------------------------------

def criterion_2():
    runs = {s: n2_run(n2_cache(0.8), s) for s in STRATEGIES}
    recov = {s: r.summary["space_recovery.count"] for s, r in runs.items()}
    rows = []
    for r in runs.values():
        rows.append([rec.row() for rec in r.machine.all_stats()])
    same = all(rows_i == rows[0] for rows_i in rows)
    ratio = runs["DUMP"].summary["memory_access_ratio"]
    ok = ratio <= 1 and all(v == 0 for v in recov.values()) and same
    return ok, f"access ratio {ratio}, recoveries {recov}, stats identical {same}"


# -- 3 ----------------------------------------------------------------------

PHASED_CACHE = 364_000
PHASED_FILL = 1600   # highest fill of the sweep 800..1600


def criterion_3():
    plain = n2_run(PHASED_CACHE, "CLASSIFIED", PHASED_FILL)
    phased = n2_run(PHASED_CACHE, "CLASSIFIED", PHASED_FILL, creation="DUMP")
    a = phased.summary["space_recovery.count"]
    b = plain.summary["space_recovery.count"]
    same = plain.output["digest"] == phased.output["digest"]
    return a < b and same, (f"DUMP-then-CLASSIFIED {a} vs CLASSIFIED {b} recoveries, "
                            f"access ratio {plain.summary['memory_access_ratio']}")


# -- 4 ----------------------------------------------------------------------

def creation_messages(width: int, creates: int = 12) -> list[int]:
    m = Machine(num_clients=1, num_servers=16, segment_bytes=2000, directory_entries=4,
                cache_bytes=200_000)
    fab = m.fabric

    def prog(api):
        g = api.create_group("SINGLE", width, 0)
        api.create_object(g, 2000, 0)
        counts = []
        for _ in range(creates):
            # each object fills a segment, so every creation finds them all full
            before = fab.sent
            api.create_object(g, 2000, 0)
            counts.append(fab.sent - before)
        return counts
    return m.run(prog)[0]


def criterion_4():
    t0 = time.time()
    widths = (1, 2, 4, 8, 16)
    xs, ys = [], []
    means = {}
    for w in widths:
        c = creation_messages(w)
        xs += [w] * len(c)
        ys += c
        means[w] = sum(c) / len(c)
    r = np.corrcoef(xs, ys)[0, 1]
    took = time.time() - t0
    return r * r > 0.99 and took < 10, f"messages per create {means}, R^2 {r * r:.6f}, {took:.1f}s"


# -- 5 ----------------------------------------------------------------------

def btree_sweep(fill: int, inserts: int, searches: int, depths):
    out = []
    for d in depths:
        r = run_experiment(make_config(
            workload="btree", num_inserts=inserts, num_searches=searches, object_fill=fill,
            cache_bytes=80_000, segment_bytes=4000, prefetch_depth=d, prefetch_priority="HIGH"))
        c = client_row(r)
        out.append((c.ops["fetch"].count, c["prefetched_unused"], c["execution_ticks"]))
    return out


def criterion_5():
    t0 = time.time()
    low = btree_sweep(100, 1000, 1200, range(0, 9))
    fetch = [f for f, _, _ in low]
    unused = [u for _, u, _ in low]
    dec = all(a > b for a, b in zip(fetch[:6], fetch[1:6]))
    nondec = all(a <= b for a, b in zip(unused, unused[1:]))
    high = btree_sweep(400, 1000, 1000, range(0, 7))
    cost = [t for _, _, t in high]
    best = min(range(len(cost)), key=cost.__getitem__)
    interior = cost[best] < cost[0] and cost[best] < cost[-1]
    took = time.time() - t0
    ok = dec and nondec and interior and took < 300
    return ok, (f"low fill fetches {fetch[:6]} (decreasing {dec}), unused {unused} "
                f"(non-decreasing {nondec}); high fill cost minimum at depth {best} "
                f"of {len(cost) - 1} ({interior}), {took:.0f}s")


# -- 6 ----------------------------------------------------------------------

def criterion_6():
    # extent 1000 and 20 entries fill the 20,000 byte data area exactly
    fill = 1000 - 56
    assert object_extent(56 + fill, 0) * 20 == 20_000
    fetch = {}
    for ctx in ("SINGLE", "SEGMENT"):
        r = run_experiment(make_config(
            workload="n2", num_particles=200, object_fill=fill, cache_bytes=350_000,
            segment_bytes=20_000, directory_entries=20, movement_context=ctx))
        fetch[ctx] = client_row(r).ops["fetch"].count
    ok = fetch["SINGLE"] >= 10 * fetch["SEGMENT"]
    return ok, f"fetches {fetch}, reduction {fetch['SINGLE'] / max(1, fetch['SEGMENT']):.1f}x"


# -- 7 ----------------------------------------------------------------------

def criterion_7():
    out = {}
    for ctx in ("SINGLE", "SEGMENT"):
        r = run_experiment(make_config(
            workload="octree", num_particles=600, time_steps=1, object_fill=1000,
            active_particles=30, cache_bytes=2_400_000, segment_bytes=49_440,
            directory_entries=40, movement_context=ctx))
        c = client_row(r)
        out[ctx] = (c.ops["fetch"].count, c.ops["space_recovery"].count)
    fr = out["SEGMENT"][0] / max(1, out["SINGLE"][0])
    rr = out["SEGMENT"][1] / max(1, out["SINGLE"][1])
    return fr >= 2 and rr >= 10, f"(fetches, recoveries) {out}, ratios {fr:.2f}x {rr:.1f}x"


# -- 8 ----------------------------------------------------------------------

TRANSPARENCY = {
    "btree": dict(num_inserts=300, num_searches=300, cache_bytes=40_000),
    "n2": dict(num_particles=60, time_steps=2, cache_bytes=25_000),
    "octree": dict(num_particles=80, time_steps=2, cache_bytes=60_000),
    "pluck": dict(num_points=200, time_steps=5, num_clients=2, num_servers=2, cache_bytes=60_000),
}


def criterion_8():
    bad = []
    pressure = {}
    for wl, kw in TRANSPARENCY.items():
        digests = set()
        recov = 0
        for s in STRATEGIES:
            for d in (0, 2):
                for ctx in ("SINGLE", "SEGMENT"):
                    r = run_experiment(make_config(
                        workload=wl, strategy=s, prefetch_depth=d, movement_context=ctx,
                        segment_bytes=4000, directory_entries=4, object_fill=200, **kw))
                    digests.add(r.output["digest"])
                    recov += r.summary["space_recovery.count"]
        pressure[wl] = recov
        if len(digests) != 1 or recov == 0:
            bad.append(wl)
    return not bad, f"12 configurations per workload, total recoveries {pressure}, mismatched {bad}"


# -- 9 ----------------------------------------------------------------------

PLUCK_POINTS = 8000
PLUCK_STEPS = 20


def pluck_run(k: int):
    return run_experiment(make_config(
        workload="pluck", num_points=PLUCK_POINTS, time_steps=PLUCK_STEPS, num_clients=k,
        num_servers=max(1, k // 2), cache_bytes=10_000_000))


def criterion_9():
    ref = oracles.pluck_reference(pluck.PluckConfig(num_points=PLUCK_POINTS,
                                                    time_steps=PLUCK_STEPS))
    counts = (1, 2, 4, 8, 16)
    errs = {}
    cost, summed = [], []
    for k in counts:
        out = pluck_run(k).output
        if k <= 8:
            errs[k] = max(abs(a - b) for a, b in zip(out["values"], ref))
        summed.append(sum(out["coherence_ticks"]))
        cost.append(summed[-1] / k)
    rising = all(a < b for a, b in zip(cost, cost[1:]))
    d2 = [cost[i - 1] - 2 * cost[i] + cost[i + 1] for i in range(1, len(cost) - 1)]
    concave = sum(x <= 0 for x in d2) >= 2
    ok = all(e <= 1e-9 for e in errs.values()) and rising and concave
    return ok, (f"max error {max(errs.values()):.1e}, wait+signal per client "
                f"{dict(zip(counts, (round(c) for c in cost)))}, second differences {d2}, "
                f"summed over clients {dict(zip(counts, summed))}")


# -- 10 ---------------------------------------------------------------------

def mutex_schedule(seed: int):
    rng = random.Random(seed)
    m = Machine(MachineConfig(num_clients=4, num_servers=2, trace=True,
                              fabric=FabricConfig(seed=seed, jitter=rng.randint(0, 3000))))
    rounds = 3
    delays = [[rng.randint(0, 4000) for _ in range(2 * rounds)] for _ in range(4)]
    sections = []

    def prog(api):
        me = api.identity
        if me == 0:
            g = api.create_group("SINGLE", 1, 0)
            lock = api.create_object(g, 8, 0)
            api.pack(lock, "<q", 0, 0)
            api.name_object("lock", lock)
        api.synchronise()
        lock = api.object_named("lock")
        for j in range(rounds):
            api.compute(delays[me][2 * j])
            api.wait(lock)
            start = api.clock
            v, = api.unpack(lock, "<q")
            api.compute(delays[me][2 * j + 1])
            api.pack(lock, "<q", 0, v + 1)
            sections.append((start, api.clock, me))
            api.signal(lock)
        api.synchronise()
        api.wait(lock)
        v, = api.unpack(lock, "<q")
        api.signal(lock)
        return v

    res = m.run(prog)
    events = m.fabric.events
    waits = [e[3] for e in events if e[0] == "wait"]
    grants = [e[3] for e in events if e[0] == "grant"]
    sections.sort()
    overlap = any(b[0] < a[1] for a, b in zip(sections, sections[1:]))
    return overlap, waits == grants, res


def criterion_10():
    overlaps = 0
    order_bad = 0
    lost = 0
    for seed in range(1000):
        overlap, fifo, res = mutex_schedule(seed)
        overlaps += overlap
        order_bad += not fifo
        lost += any(v != 12 for v in res)
    ok = overlaps == 0 and order_bad == 0 and lost == 0
    return ok, (f"1000 schedules: overlapping sections {overlaps}, "
                f"grant order mismatches {order_bad}, lost updates {lost}")


# -- 11 ---------------------------------------------------------------------

def barrier_violations(m: Machine) -> tuple[int, int]:
    """Count SYNC_ACKs emitted before some pre-SYNC client message was handled."""
    sync_seqs: dict = {}
    for rec in m.fabric.trace:
        if rec.tag is Tag.SYNC:
            sync_seqs.setdefault((rec.src, rec.dst), []).append(rec.seq)
    sends: dict = {}
    for rec in m.fabric.trace:
        if rec.src.kind is Kind.CLIENT and rec.dst.kind is Kind.SERVER:
            sends.setdefault(rec.dst, []).append(rec)
    handled: dict = {}
    acks = 0
    bad = 0
    for ev in m.fabric.events:
        if ev[0] == "handled":
            handled.setdefault(ev[1], set()).add(ev[4])
        elif ev[0] == "sync_ack":
            acks += 1
            srv, epoch = ev[1], ev[2]
            seen = handled.get(srv, set())
            for rec in sends.get(srv, []):
                syncs = sync_seqs[(rec.src, srv)]
                if epoch <= len(syncs) and rec.seq <= syncs[epoch - 1] and rec.seq not in seen:
                    bad += 1
    return acks, bad


def criterion_11():
    total_acks = total_bad = 0
    for seed in range(20):
        m = Machine(MachineConfig(num_clients=4, num_servers=3, trace=True,
                                  fabric=FabricConfig(seed=seed, jitter=2000)))
        m.run(pluck.program(pluck.PluckConfig(num_points=120, time_steps=4, seed=seed)))
        acks, bad = barrier_violations(m)
        total_acks += acks
        total_bad += bad
    return total_bad == 0 and total_acks > 0, \
        f"{total_acks} SYNC_ACKs over 20 traced runs, {total_bad} early"


# -- 12 ---------------------------------------------------------------------

def criterion_12():
    rng = random.Random(12)
    rot = ResidentObjectTable()
    model: dict[int, object] = {}
    worst = 0.0
    for step in range(100_000):
        op = rng.random()
        if op < 0.45 or not model:
            u = rng.randrange(0, 1 << 20) * 2 + 1
            if u not in model:
                model[u] = rot.insert(ObjectId(0, 0, u))
        elif op < 0.75:
            u = rng.choice(list(model)) if rng.random() < 0.8 else rng.randrange(1 << 21) | 1
            e = rot.search(ObjectId(0, 0, u))
            assert (e is not None) == (u in model)
        else:
            u = rng.choice(list(model))
            rot.remove(model.pop(u))
        if step % 10_000 == 9_999:
            rot.check()
            worst = max(worst, rot.depth() / (2 * math.log2(len(model) + 1)))
    rot.check()
    keys = [e.oid.unique for e in rot.in_order()]
    agree = keys == sorted(model) and {e.oid.unique for e in rot.mru()} == set(model)
    worst = max(worst, rot.depth() / (2 * math.log2(len(model) + 1)))
    return agree and worst <= 1, (f"{len(model)} entries after 10^5 ops, "
                                  f"depth/(2 log2(n+1)) at most {worst:.3f}")


# -- 13 ---------------------------------------------------------------------

def criterion_13():
    T = 3_000_000
    examples = {10_000: 375_000, 40_000: 600_000, 2_000_000: 2_000_000}
    got = {x: target_bytes(x, T) for x in examples}
    grid = [round(i * 3 * T / 10_000) for i in range(10_000)]
    vals = [target_bytes(x, T) for x in grid]
    mono = all(a <= b for a, b in zip(vals, vals[1:]))
    above = all(v >= x for v, x in zip(vals, grid))
    return got == examples and mono and above, f"examples {got}, monotone {mono}, >= x {above}"


# -- 14 ---------------------------------------------------------------------

def octree_accels(theta: float, n: int = 300, seed: int = 4):
    cfg = octree.OctTreeConfig(num_particles=n, time_steps=1, theta=theta, seed=seed)
    r = Machine(num_clients=1, num_servers=2, cache_bytes=10_000_000).run(octree.program(cfg))[0]
    p = np.array(initial_particles(n, seed))
    ref = oracles.direct_accelerations(p[:, :3], p[:, 6], cfg.grav_const, cfg.softening)
    return np.array(r["accelerations"]), ref


def criterion_14():
    t0 = time.time()
    got, ref = octree_accels(0.5)
    err_half = np.linalg.norm(got - ref) / np.linalg.norm(ref)
    got, ref = octree_accels(0.0)
    err_zero = np.max(np.linalg.norm(got - ref, axis=1) / np.linalg.norm(ref, axis=1))
    cfg = nbody.N2Config(num_particles=100, time_steps=2, seed=5)
    r = Machine(num_clients=1, num_servers=2).run(nbody.program(cfg))[0]
    want = oracles.nbody_direct(100, 2, 5, cfg.grav_const, cfg.softening, cfg.dt)
    have = np.array([p[:6] for p in r["particles"]])
    err_n2 = np.max(np.abs(have - want) / np.abs(want))
    took = time.time() - t0
    ok = err_half <= 0.02 and err_zero <= 1e-12 and err_n2 <= 1e-12 and took < 30
    return ok, (f"oct-tree theta=0.5 error {err_half:.4f}, theta=0 {err_zero:.1e}, "
                f"N^2 {err_n2:.1e}, {took:.1f}s")


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 15)}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n]()
    with capsys.disabled():
        report(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    which = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    for n in which:
        report(n, *CRITERIA[n]())
