"""Assemble servers and clients on one fabric and run client programs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .api import ObjectStore
from .costs import CostModel, PrefetchPriority
from .fabric import Fabric, FabricConfig, client
from .lom import DEFAULT_CACHE_BYTES, ENTRY_OVERHEAD, LocalObjectManager
from .recovery import Strategy
from .server import Server
from .stats import StatsRecord
from .storage import DEFAULT_DIRECTORY_ENTRIES, DEFAULT_SEGMENT_BYTES

Program = Callable[[ObjectStore], Any]


@dataclass
class MachineConfig:
    num_clients: int = 1
    num_servers: int = 1
    cache_bytes: int = DEFAULT_CACHE_BYTES
    segment_bytes: int = DEFAULT_SEGMENT_BYTES
    directory_entries: int = DEFAULT_DIRECTORY_ENTRIES
    entry_overhead: int = ENTRY_OVERHEAD
    strategy: Strategy = Strategy.CLASSIFIED
    prefetch: PrefetchPriority = PrefetchPriority.HIGH
    costs: CostModel = field(default_factory=CostModel)
    fabric: FabricConfig = field(default_factory=FabricConfig)
    trace: bool = False

    def __post_init__(self) -> None:
        if self.num_clients < 1 or self.num_servers < 1:
            raise ValueError("need at least one client and one server")
        if self.cache_bytes <= 0 or self.segment_bytes <= 0 or self.directory_entries <= 0:
            raise ValueError("sizes must be positive")


class Machine:
    def __init__(self, cfg: MachineConfig | None = None, **overrides):
        if cfg is None:
            cfg = MachineConfig(**overrides)
        elif overrides:
            raise TypeError("pass either a config or keyword overrides")
        self.cfg = cfg
        self.fabric = Fabric(cfg.fabric, trace=cfg.trace)
        self.servers = [
            Server(self.fabric, r, cfg.num_servers, cfg.num_clients,
                   segment_bytes=cfg.segment_bytes, directory_entries=cfg.directory_entries,
                   prefetch=cfg.prefetch, costs=cfg.costs)
            for r in range(cfg.num_servers)
        ]
        self.loms: list[LocalObjectManager] = []
        self.stores: list[ObjectStore] = []
        for r in range(cfg.num_clients):
            port = self.fabric.add_client(client(r))
            lom = LocalObjectManager(
                port, cfg.num_servers, capacity=cfg.cache_bytes, strategy=cfg.strategy,
                costs=cfg.costs, segment_bytes=cfg.segment_bytes,
                directory_entries=cfg.directory_entries, entry_overhead=cfg.entry_overhead)
            self.loms.append(lom)
            self.stores.append(ObjectStore(lom, cfg.num_clients))
        self.results: list[Any] = [None] * cfg.num_clients

    def run(self, program: Program | list[Program]) -> list[Any]:
        """Run one program per client (the same one if a single callable)."""
        programs = program if isinstance(program, list) else [program] * self.cfg.num_clients
        if len(programs) != self.cfg.num_clients:
            raise ValueError("one program per client")
        for r, prog in enumerate(programs):
            self.fabric.set_program(client(r), self._wrap(r, prog))
        self.fabric.run()
        return self.results

    def _wrap(self, r: int, prog: Program):
        store = self.stores[r]

        def main():
            self.results[r] = prog(store)
            store.close()
        return main

    # -- reporting ----------------------------------------------------------
    def client_stats(self) -> list[StatsRecord]:
        return [lom.stats.snapshot() for lom in self.loms]

    def server_stats(self) -> list[StatsRecord]:
        return [s.report() for s in self.servers]

    def all_stats(self) -> list[StatsRecord]:
        return self.client_stats() + self.server_stats()

    @property
    def terminated(self) -> bool:
        return all(s.terminated for s in self.servers)
