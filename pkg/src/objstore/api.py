"""Programming interface offered to applications running on a client."""
from __future__ import annotations

import struct

from .ids import NULL_OID, MovementContext, ObjectId, decode_oid
from .lom import LocalObjectManager
from .recovery import Strategy
from .rot import RotEntry
from .stats import StatsRecord


class Ref:
    """A reference to a store object.

    Unswizzled refs carry only the OID.  A swizzled ref also holds the ROT
    entry and keeps that entry's reference count raised while it lives.
    """

    __slots__ = ("oid", "_entry")

    def __init__(self, oid: ObjectId, entry: RotEntry | None = None):
        self.oid = oid
        self._entry = entry
        if entry is not None:
            entry.ref_count += 1

    def _bind(self, entry: RotEntry) -> None:
        self._entry = entry
        entry.ref_count += 1

    def __del__(self):
        e = self._entry
        if e is not None:
            e.ref_count -= 1

    @property
    def swizzled(self) -> bool:
        return self._entry is not None

    @property
    def is_null(self) -> bool:
        return self.oid == NULL_OID

    def __eq__(self, other) -> bool:
        if isinstance(other, Ref):
            return self.oid == other.oid
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.oid)

    def __repr__(self) -> str:
        return f"Ref({self.oid}{'*' if self._entry is not None else ''})"


NULL_REF = Ref(NULL_OID)


class IndexedRef:
    """``container[index]`` whose storage slot is resolved only when used."""

    __slots__ = ("container", "index")

    def __init__(self, container: Ref, index: int):
        if index < 0:
            raise IndexError(f"negative reference index {index}")
        self.container = container
        self.index = index


class ObjectStore:
    """Per-client handle: every call runs inside that client's program."""

    def __init__(self, lom: LocalObjectManager, num_clients: int = 1):
        self.lom = lom
        self.num_clients = num_clients
        # strategy to adopt when the program announces a phase
        self.phase_strategies: dict[str, Strategy] = {}
        self.phase_log: list[tuple[str, StatsRecord]] = []

    # -- identity & stats ---------------------------------------------------
    @property
    def identity(self) -> int:
        return self.lom.rank

    def client_identity(self) -> int:
        return self.lom.rank

    def current_stats(self) -> StatsRecord:
        return self.lom.stats.snapshot()

    def set_strategy(self, strategy: Strategy | str) -> None:
        self.lom.strategy = Strategy(strategy)

    def phase(self, name: str) -> None:
        """Mark a phase boundary; may switch the recovery strategy."""
        self.phase_log.append((name, self.current_stats()))
        if name in self.phase_strategies:
            self.lom.strategy = self.phase_strategies[name]

    @property
    def clock(self) -> int:
        return self.lom.clock

    def compute(self, ticks: int) -> None:
        """Charge application computation time to this client."""
        self.lom.port.advance(ticks)

    # -- helpers ------------------------------------------------------------
    def _entry(self, r: Ref) -> RotEntry:
        if r.oid == NULL_OID:
            raise ValueError("NULL reference dereferenced")
        if r._entry is None:
            r._bind(self.lom.find(r.oid, load=False))
        return r._entry

    def _wrapper(self, r: Ref):
        return self.lom.access(self._entry(r))

    # -- creation -----------------------------------------------------------
    def create_group(self, context: MovementContext | str = MovementContext.SINGLE,
                     width: int | None = None, prefetch_depth: int | None = None) -> int:
        if isinstance(context, str):
            context = MovementContext[context]
        return self.lom.create_group(context, 1 if width is None else width,
                                     0 if prefetch_depth is None else prefetch_depth)

    def create_object(self, gid: int, data_size: int, ref_count: int) -> Ref:
        e = self.lom.create_object(gid, data_size, ref_count)
        return Ref(e.oid, e)

    # -- data ---------------------------------------------------------------
    def data_size(self, r: Ref) -> int:
        return self._wrapper(r).data_size

    def ref_count(self, r: Ref) -> int:
        return self._wrapper(r).ref_count

    def read(self, r: Ref, offset: int = 0, length: int | None = None) -> bytes:
        w = self._wrapper(r)
        if length is None:
            length = w.data_size - offset
        if offset < 0 or length < 0 or offset + length > w.data_size:
            raise IndexError(f"read [{offset}, {offset + length}) outside {w.data_size} bytes")
        return bytes(w.buf[offset:offset + length])

    def read_into(self, r: Ref, offset: int, destination: bytearray) -> None:
        destination[:] = self.read(r, offset, len(destination))

    def write(self, r: Ref, offset: int, data: bytes) -> None:
        e = self._entry(r)
        w = self.lom.access(e)
        end = offset + len(data)
        if offset < 0 or end > w.data_size:
            raise IndexError(f"write [{offset}, {end}) outside {w.data_size} bytes")
        w.buf[offset:end] = data
        e.dirty = True

    def unpack(self, r: Ref, fmt: str, offset: int = 0) -> tuple:
        return struct.unpack(fmt, self.read(r, offset, struct.calcsize(fmt)))

    def pack(self, r: Ref, fmt: str, offset: int, *values) -> None:
        self.write(r, offset, struct.pack(fmt, *values))

    # -- references ---------------------------------------------------------
    def index(self, r: Ref, i: int) -> IndexedRef:
        return IndexedRef(r, i)

    def read_ref(self, slot: IndexedRef) -> Ref:
        ce = self._entry(slot.container)
        i = slot.index
        ce.protected += 1
        try:
            w = self.lom.access(ce)
            if i >= w.ref_count:
                raise IndexError(f"reference index {i} outside {w.ref_count}")
            e = w.slots.get(i)
            if e is not None:
                return Ref(e.oid, e)
            oid = decode_oid(w.ref_word(i))
            if oid == NULL_OID:
                return NULL_REF
            e = self.lom.find(oid, load=False)
            w = self.lom.access(ce)
            if i not in w.slots:
                w.slots[i] = e
                e.ref_count += 1
            return Ref(oid, w.slots[i])
        finally:
            ce.protected -= 1

    def copy_ref(self, slot: IndexedRef) -> Ref:
        """The reference held in ``slot`` as a fresh, unswizzled copy.

        Unlike ``read_ref`` the slot itself is left alone, so the target's
        count only reflects the copy while the caller keeps it.
        """
        w = self._wrapper(slot.container)
        i = slot.index
        if i >= w.ref_count:
            raise IndexError(f"reference index {i} outside {w.ref_count}")
        e = w.slots.get(i)
        oid = e.oid if e is not None else decode_oid(w.ref_word(i))
        return NULL_REF if oid == NULL_OID else Ref(oid)

    def assign(self, lhs: IndexedRef, rhs: Ref) -> None:
        """``lhs.container[lhs.index] = rhs``, resolving the slot only now."""
        ce = self._entry(lhs.container)
        w = self.lom.access(ce)
        i = lhs.index
        if i >= w.ref_count:
            raise IndexError(f"reference index {i} outside {w.ref_count}")
        old = w.slots.pop(i, None)
        if old is not None:
            old.ref_count -= 1
        # stored unswizzled; the slot is swizzled when it is first read
        w.set_ref_word(i, rhs.oid.encode())
        ce.dirty = True

    # -- coordination -------------------------------------------------------
    def wait(self, r: Ref) -> None:
        self.lom.wait(self._entry(r))

    def signal(self, r: Ref) -> None:
        self.lom.signal(self._entry(r))

    def dump(self) -> None:
        self.lom.dump()

    def synchronise(self) -> None:
        self.lom.synchronise()

    def name_object(self, name: str, r: Ref) -> None:
        self.lom.name_object(name, r.oid)

    def object_named(self, name: str) -> Ref:
        oid = self.lom.object_named(name)
        return NULL_REF if oid == NULL_OID else Ref(oid)

    def close(self) -> None:
        self.lom.close()
