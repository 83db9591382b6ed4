import math

import pytest
from hypothesis import given, settings, strategies as st

from objstore.fabric import (
    ConfigurationError,
    DeadlockError,
    Fabric,
    FabricConfig,
    client,
    server,
)


class Sink:
    """Minimal server actor that records deliveries."""

    def __init__(self, fabric, rank):
        self.pid = server(rank)
        self.clock = 0
        self.got = []
        fabric.add_server(self)

    def on_message(self, env):
        self.clock = max(self.clock, env.deliver_tick)
        self.got.append(env)

    def has_idle_work(self):
        return False


def test_delivery_tick():
    fab = Fabric(FabricConfig(latency=1350, per_byte_cost=0.45))
    sink = Sink(fab, 0)
    port = fab.add_client(client(0))

    def prog():
        port.advance(100)
        port.send(server(0), "x", nbytes=1001)
    fab.set_program(client(0), prog)
    fab.run()
    assert sink.got[0].deliver_tick == 100 + 1350 + math.ceil(0.45 * 1001)
    assert fab.sent == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**16), st.integers(1, 5000),
       st.lists(st.tuples(st.integers(0, 3000), st.integers(0, 4000)), min_size=1, max_size=40))
def test_fifo_per_pair(seed, jitter, sends):
    fab = Fabric(FabricConfig(seed=seed, jitter=jitter))
    sink = Sink(fab, 0)
    port = fab.add_client(client(0))

    def prog():
        for i, (gap, size) in enumerate(sends):
            port.advance(gap)
            port.send(server(0), i, nbytes=size)
    fab.set_program(client(0), prog)
    fab.run()
    assert [e.tag for e in sink.got] == list(range(len(sends)))
    ticks = [e.deliver_tick for e in sink.got]
    assert ticks == sorted(ticks)


def test_same_seed_same_schedule():
    def trace(seed):
        fab = Fabric(FabricConfig(seed=seed, jitter=900), trace=True)
        Sink(fab, 0)
        Sink(fab, 1)
        ports = [fab.add_client(client(r)) for r in range(3)]
        for r, port in enumerate(ports):
            def prog(port=port, r=r):
                for i in range(10):
                    port.advance(37 * r + i)
                    port.send(server(i % 2), (r, i), nbytes=10 * i)
            fab.set_program(client(r), prog)
        fab.run()
        return fab.trace_csv()
    assert trace(5) == trace(5)
    assert trace(5) != trace(6)


def test_blocked_client_is_a_deadlock():
    fab = Fabric()
    Sink(fab, 0)
    port = fab.add_client(client(0))
    fab.set_program(client(0), lambda: port.block("a reply that never comes"))
    with pytest.raises(DeadlockError) as info:
        fab.run()
    assert client(0) in info.value.blocked


def test_unknown_destination():
    fab = Fabric()
    port = fab.add_client(client(0))
    with pytest.raises(ConfigurationError):
        port.send(server(3), "x")


def test_negative_costs_rejected():
    with pytest.raises(ValueError):
        FabricConfig(latency=-1)
