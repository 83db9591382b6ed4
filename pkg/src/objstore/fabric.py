"""Deterministic discrete-event message fabric.

Servers are plain message handlers that never block.  Each client runs its
program inside a greenlet; whenever it must wait for a message (or merely
wants to catch up with simulated time) it switches back to the scheduler
loop, which resumes it once the awaited condition may have changed.

Every actor keeps its own tick clock.  A message sent at the sender's clock
``t`` with ``n`` payload bytes is delivered at
``t + latency + ceil(per_byte_cost * n)``, never earlier than the previous
message on the same (src, dst) pair, so per-pair FIFO always holds.  Ties in
delivery time break on (kind, rank) of the source and then send order.
"""
from __future__ import annotations

import enum
import heapq
import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

import greenlet


class Kind(enum.IntEnum):
    CLIENT = 0
    SERVER = 1


@dataclass(frozen=True, order=True)
class ProcessId:
    kind: Kind
    rank: int

    def __str__(self) -> str:
        return f"{'C' if self.kind is Kind.CLIENT else 'S'}{self.rank}"


def client(rank: int) -> ProcessId:
    return ProcessId(Kind.CLIENT, rank)


def server(rank: int) -> ProcessId:
    return ProcessId(Kind.SERVER, rank)


@dataclass(frozen=True)
class FabricConfig:
    latency: int = 1350
    per_byte_cost: float = 0.45
    seed: int = 0
    jitter: int = 0  # extra uniform [0, jitter] ticks per message, still FIFO

    def __post_init__(self) -> None:
        if self.latency < 0 or self.per_byte_cost < 0 or self.jitter < 0:
            raise ValueError("fabric costs must be non-negative")


class Envelope:
    __slots__ = ("src", "dst", "tag", "payload", "nbytes", "send_tick", "deliver_tick", "seq")

    def __init__(self, src, dst, tag, payload, nbytes, send_tick, deliver_tick, seq):
        self.src = src
        self.dst = dst
        self.tag = tag
        self.payload = payload
        self.nbytes = nbytes
        self.send_tick = send_tick
        self.deliver_tick = deliver_tick
        self.seq = seq

    def __repr__(self) -> str:
        tag = getattr(self.tag, "name", self.tag)
        return (f"Envelope({self.src}->{self.dst} {tag} {self.nbytes}B "
                f"@{self.send_tick}->{self.deliver_tick} #{self.seq})")


class ConfigurationError(RuntimeError):
    pass


class DeadlockError(RuntimeError):
    def __init__(self, blocked: dict[ProcessId, str]):
        self.blocked = blocked
        detail = ", ".join(f"{pid} awaiting {why}" for pid, why in sorted(blocked.items()))
        super().__init__(f"deadlock: {detail}")


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    src: ProcessId
    dst: ProcessId
    tag: Any
    nbytes: int
    seq: int

    def csv(self) -> str:
        return f"{self.tick},{self.src},{self.dst},{getattr(self.tag, 'name', self.tag)},{self.nbytes}"


_DELIVER, _RESUME, _IDLE = 0, 1, 2


class ClientPort:
    """A client's attachment to the fabric: clock, mailbox, blocking."""

    def __init__(self, fabric: "Fabric", pid: ProcessId):
        self.fabric = fabric
        self.pid = pid
        self.clock = 0
        self.mailbox: deque[Envelope] = deque()
        self.blocked: str | None = None
        self.resume_pending = False
        self.done = False
        self.glet: greenlet.greenlet | None = None

    def advance(self, ticks: int) -> None:
        self.clock += ticks

    def send(self, dst: ProcessId, tag, payload=None, nbytes: int = 0) -> Envelope:
        return self.fabric.send(self.pid, dst, tag, payload, nbytes, self.clock)

    def yield_now(self) -> None:
        """Let every event up to this client's clock happen."""
        self.fabric._yield(self)

    def block(self, reason: str) -> None:
        """Suspend until a new message is delivered to this client."""
        self.fabric._block(self, reason)


class Fabric:
    def __init__(self, config: FabricConfig | None = None, trace: bool = False):
        self.config = config or FabricConfig()
        self.rng = random.Random(self.config.seed)
        self.tracing = trace
        self.trace: list[TraceRecord] = []
        self.events: list[tuple] = []  # actor-level log, filled by actors when tracing
        self.servers: dict[ProcessId, Any] = {}
        self.clients: dict[ProcessId, ClientPort] = {}
        self._programs: dict[ProcessId, Callable[[], Any]] = {}
        self._heap: list[tuple] = []
        self._seq = 0
        self._last_delivery: dict[tuple[ProcessId, ProcessId], int] = {}
        self._idle_scheduled: set[ProcessId] = set()
        self._main: greenlet.greenlet | None = None
        self.now = 0
        self.sent = 0
        self.delivered = 0
        self.dropped = 0

    # -- registration -----------------------------------------------------
    def add_server(self, actor) -> None:
        if actor.pid in self.servers:
            raise ConfigurationError(f"duplicate process {actor.pid}")
        self.servers[actor.pid] = actor

    def add_client(self, pid: ProcessId, program: Callable[[], Any] | None = None) -> ClientPort:
        if pid in self.clients:
            raise ConfigurationError(f"duplicate process {pid}")
        port = ClientPort(self, pid)
        self.clients[pid] = port
        if program is not None:
            self._programs[pid] = program
        return port

    def set_program(self, pid: ProcessId, program: Callable[[], Any]) -> None:
        self._programs[pid] = program

    def processes(self) -> list[ProcessId]:
        return sorted([*self.clients, *self.servers])

    # -- messaging --------------------------------------------------------
    def _clock_of(self, pid: ProcessId) -> int:
        if pid in self.clients:
            return self.clients[pid].clock
        if pid in self.servers:
            return self.servers[pid].clock
        raise ConfigurationError(f"unknown endpoint {pid}")

    def send(self, src: ProcessId, dst: ProcessId, tag, payload=None, nbytes: int = 0,
             send_tick: int | None = None) -> Envelope:
        if dst not in self.clients and dst not in self.servers:
            raise ConfigurationError(f"unknown endpoint {dst}")
        if send_tick is None:
            send_tick = self._clock_of(src)
        cfg = self.config
        tick = send_tick + cfg.latency + math.ceil(cfg.per_byte_cost * nbytes)
        if cfg.jitter:
            tick += self.rng.randint(0, cfg.jitter)
        pair = (src, dst)
        tick = max(tick, self._last_delivery.get(pair, 0))
        self._last_delivery[pair] = tick
        self._seq += 1
        env = Envelope(src, dst, tag, payload, nbytes, send_tick, tick, self._seq)
        heapq.heappush(self._heap, (tick, _DELIVER, src.kind, src.rank, self._seq, env))
        self.sent += 1
        return env

    def broadcast(self, src: ProcessId, tag, payload=None, nbytes: int = 0,
                  include_self: bool = False, kinds: tuple[Kind, ...] | None = None
                  ) -> list[Envelope]:
        out = []
        for pid in self.processes():
            if pid == src and not include_self:
                continue
            if kinds is not None and pid.kind not in kinds:
                continue
            out.append(self.send(src, pid, tag, payload, nbytes))
        return out

    # -- scheduling -------------------------------------------------------
    def _push(self, tick: int, phase: int, pid: ProcessId, item) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (tick, phase, pid.kind, pid.rank, self._seq, item))

    def _yield(self, port: ClientPort) -> None:
        self._push(port.clock, _RESUME, port.pid, port)
        port.resume_pending = True
        self._main.switch()

    def _block(self, port: ClientPort, reason: str) -> None:
        port.blocked = reason
        self._main.switch()

    def schedule_idle(self, actor) -> None:
        if actor.pid not in self._idle_scheduled:
            self._idle_scheduled.add(actor.pid)
            self._push(actor.clock, _IDLE, actor.pid, actor)

    def _deliver(self, env: Envelope) -> None:
        self.delivered += 1
        if self.tracing:
            self.trace.append(TraceRecord(env.deliver_tick, env.src, env.dst, env.tag,
                                          env.nbytes, env.seq))
        dst = env.dst
        port = self.clients.get(dst)
        if port is not None:
            if port.done:
                self.dropped += 1
                return
            port.mailbox.append(env)
            if port.blocked is not None and not port.resume_pending:
                port.resume_pending = True
                self._push(env.deliver_tick, _RESUME, dst, port)
            return
        actor = self.servers[dst]
        actor.on_message(env)
        if actor.has_idle_work():
            self.schedule_idle(actor)

    def _resume(self, tick: int, port: ClientPort) -> None:
        port.resume_pending = False
        port.blocked = None
        if tick > port.clock:
            port.clock = tick
        port.glet.switch()
        if port.glet.dead:
            port.done = True

    def _idle(self, tick: int, actor) -> None:
        self._idle_scheduled.discard(actor.pid)
        if not actor.has_idle_work():
            return
        if actor.clock > tick:
            self.schedule_idle(actor)
            return
        actor.on_idle()
        if actor.has_idle_work():
            self.schedule_idle(actor)

    def run(self) -> None:
        """Run until no events remain; raise DeadlockError if a client is stuck."""
        self._main = greenlet.getcurrent()
        for pid in sorted(self.clients):
            port = self.clients[pid]
            if pid not in self._programs:
                port.done = True
                continue
            port.glet = greenlet.greenlet(self._programs[pid], parent=self._main)
            self._push(port.clock, _RESUME, pid, port)
            port.resume_pending = True
        heap = self._heap
        while heap:
            tick, phase, _, _, _, item = heapq.heappop(heap)
            if tick > self.now:
                self.now = tick
            if phase == _DELIVER:
                self._deliver(item)
            elif phase == _RESUME:
                self._resume(tick, item)
            else:
                self._idle(tick, item)
        stuck = {pid: (p.blocked or "resume") for pid, p in self.clients.items() if not p.done}
        if stuck:
            raise DeadlockError(stuck)

    def trace_csv(self) -> str:
        return "\n".join(r.csv() for r in self.trace)
