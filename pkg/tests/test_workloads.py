"""Workload programs against the store-free reference computations."""
import numpy as np
import pytest

from objstore import Machine
from objstore.harness import make_config, run_experiment
from objstore.workloads import btree, nbody, octree, oracles, pluck
from objstore.workloads.common import block_range, digest_floats, initial_particles


def test_block_range_partitions():
    for n in (7, 10, 33):
        for k in (1, 2, 3, 7):
            spans = [block_range(n, k, w) for w in range(k)]
            assert spans[0][0] == 0 and spans[-1][1] == n
            assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
            sizes = [hi - lo for lo, hi in spans]
            assert max(sizes) - min(sizes) <= 1


def test_digest_sensitive_to_bits():
    assert digest_floats([1.0, 2.0]) != digest_floats([1.0, np.nextafter(2.0, 3.0)])


@pytest.mark.parametrize("seed", [0, 1])
def test_btree_matches_dict_tree(seed):
    cfg = btree.BTreeConfig(num_inserts=200, num_searches=300, seed=seed, object_fill=50)
    out = Machine(cache_bytes=20_000, segment_bytes=2000).run(btree.program(cfg))[0]
    assert out["checksum"] == oracles.btree_checksum(cfg)


def test_n2_matches_direct_sum():
    cfg = nbody.N2Config(num_particles=25, time_steps=3, seed=7)
    out = Machine(num_servers=2).run(nbody.program(cfg))[0]
    want = oracles.nbody_direct(25, 3, 7, cfg.grav_const, cfg.softening, cfg.dt)
    got = np.array([p[:6] for p in out["particles"]])
    assert np.max(np.abs(got - want) / np.abs(want)) <= 1e-12


def test_octree_theta_zero_is_direct_sum():
    cfg = octree.OctTreeConfig(num_particles=50, time_steps=1, theta=0.0, seed=2)
    out = Machine().run(octree.program(cfg))[0]
    p = np.array(initial_particles(50, 2))
    ref = oracles.direct_accelerations(p[:, :3], p[:, 6], cfg.grav_const, cfg.softening)
    got = np.array(out["accelerations"])
    assert np.max(np.abs(got - ref) / np.abs(ref)) <= 1e-12


def test_octree_momentum_roughly_conserved():
    cfg = octree.OctTreeConfig(num_particles=80, time_steps=3, theta=0.5, seed=6)
    out = Machine().run(octree.program(cfg))[0]
    p = np.array(initial_particles(80, 6))
    before = oracles.momentum(np.hstack([p[:, :3], p[:, 3:6]]), p[:, 6])
    after = oracles.momentum(np.array(out["particles"]), p[:, 6])
    assert np.linalg.norm(after - before) < 1e-3


def test_parallel_octree_equals_serial():
    kw = dict(num_particles=40, time_steps=2, theta=0.5, seed=3)
    serial = Machine(num_servers=2).run(octree.program(octree.OctTreeConfig(**kw)))[0]
    par = Machine(num_clients=3, num_servers=2).run(
        octree.program(octree.OctTreeConfig(parallel=True, **kw)))[0]
    assert par["digest"] == serial["digest"]


def test_octree_rejects_coincident_particles(monkeypatch):
    monkeypatch.setattr(octree, "initial_particles",
                        lambda n, seed: [(0.1, 0.1, 0.1, 0, 0, 0, 1.0)] * n)
    with pytest.raises(ValueError):
        Machine().run(octree.program(octree.OctTreeConfig(num_particles=3, time_steps=1)))


@pytest.mark.parametrize("clients", [1, 2, 3, 5])
def test_pluck_matches_sequential(clients):
    cfg = pluck.PluckConfig(num_points=60, time_steps=7)
    res = pluck.combine(Machine(num_clients=clients, num_servers=2).run(pluck.program(cfg)))
    ref = oracles.pluck_reference(cfg)
    assert max(abs(a - b) for a, b in zip(res["values"], ref)) <= 1e-12


def test_pluck_initial_shape():
    shape = pluck.initial_shape(pluck.PluckConfig(num_points=11, pluck_position=0.3))
    assert shape[0] == shape[-1] == 0.0
    assert max(shape) == pytest.approx(0.01)


def test_pluck_block_too_small():
    cfg = pluck.PluckConfig(num_points=5, time_steps=1)
    with pytest.raises(ValueError):
        Machine(num_clients=3).run(pluck.program(cfg))


@pytest.mark.parametrize("wl", ["btree", "n2", "octree", "pluck"])
def test_digest_independent_of_width_and_servers(wl):
    base = dict(workload=wl, num_inserts=100, num_searches=100, num_particles=30,
                num_points=40, time_steps=2, object_fill=40, cache_bytes=30_000,
                segment_bytes=2000)
    a = run_experiment(make_config(**base)).output["digest"]
    b = run_experiment(make_config(num_servers=3, group_width=3, **base)).output["digest"]
    assert a == b
