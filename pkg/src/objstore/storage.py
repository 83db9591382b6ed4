"""Server-side segment storage: segments, directories, group table, names.

Segment image wire format (little endian)::

    header   <HHIIII   group, segment, ts, object_count, free_bytes, capacity
    entries  <QIIII    oid word, offset, data_size, ref_count, ts   (x object_count)
    data     capacity raw bytes

Objects are laid out ``data part | reference part`` with each reference an
8-byte encoded OID.  Allocation is a bump pointer because objects are never
deleted, so free space is always a single suffix of the data area.
"""
from __future__ import annotations

import bisect
import struct
from collections import deque
from dataclasses import dataclass, field

from .ids import (
    NULL_GID,
    NULL_OID,
    NULL_OID_WORD,
    GroupDescriptor,
    Location,
    MovementContext,
    ObjectId,
    UniqueIdStream,
    decode_oid,
    next_segment_id,
    CapacityError,
    MAX_GID,
)

REF_BYTES = 8
HEADER = struct.Struct("<HHIIII")
DIR_ENTRY = struct.Struct("<QIIII")
_NULL_REF_BYTES = struct.pack("<Q", NULL_OID_WORD)

DEFAULT_SEGMENT_BYTES = 50_000
DEFAULT_DIRECTORY_ENTRIES = 50


class ObjectTooLarge(ValueError):
    pass


class ProtocolError(RuntimeError):
    pass


def object_extent(data_size: int, ref_count: int) -> int:
    return data_size + REF_BYTES * ref_count


def segment_footprint(capacity: int, entries: int) -> int:
    """Bytes a full segment structure occupies (header + directory + data)."""
    return HEADER.size + DIR_ENTRY.size * entries + capacity


@dataclass(eq=False)
class DirectoryEntry:
    oid: ObjectId
    offset: int
    data_size: int
    ref_count: int
    ts: int = 0
    sem_value: int = 1
    sem_holder: int | None = None
    wait_queue: deque = field(default_factory=deque)

    @property
    def extent(self) -> int:
        return object_extent(self.data_size, self.ref_count)


class Segment:
    def __init__(self, loc: Location, capacity: int = DEFAULT_SEGMENT_BYTES,
                 max_entries: int = DEFAULT_DIRECTORY_ENTRIES):
        self.loc = loc
        self.capacity = capacity
        self.max_entries = max_entries
        self.data = bytearray(capacity)
        self.entries: list[DirectoryEntry] = []
        self._keys: list[int] = []
        self.top = 0
        self.ts = 0
        self.holders: set[int] = set()

    @property
    def free_bytes(self) -> int:
        return self.capacity - self.top

    @property
    def object_count(self) -> int:
        return len(self.entries)

    def lookup(self, oid: ObjectId) -> DirectoryEntry | None:
        i = bisect.bisect_left(self._keys, oid.unique)
        if i < len(self._keys) and self._keys[i] == oid.unique:
            e = self.entries[i]
            if e.oid == oid:
                return e
        return None

    def __contains__(self, oid: ObjectId) -> bool:
        return self.lookup(oid) is not None

    def fits(self, data_size: int, ref_count: int) -> bool:
        return (len(self.entries) < self.max_entries
                and object_extent(data_size, ref_count) <= self.free_bytes)

    def create_object(self, data_size: int, ref_count: int, context: MovementContext,
                      ids: UniqueIdStream) -> ObjectId:
        """Allocate an object; NULL_OID if this segment cannot hold it."""
        if data_size < 0 or ref_count < 0:
            raise ValueError("negative object size")
        if object_extent(data_size, ref_count) > self.capacity:
            raise ObjectTooLarge(f"object of {object_extent(data_size, ref_count)} bytes "
                                 f"exceeds segment capacity {self.capacity}")
        if not self.fits(data_size, ref_count):
            return NULL_OID
        oid = ObjectId(self.loc.group, self.loc.segment, ids.next())
        self.place(oid, self.top, data_size, ref_count)
        if context is MovementContext.SEGMENT:
            self.ts += 1
        return oid

    def place(self, oid: ObjectId, offset: int, data_size: int, ref_count: int,
              ts: int = 0) -> DirectoryEntry:
        """Insert a directory entry at a known offset (also used by replicas)."""
        if offset != self.top:
            raise ProtocolError(f"segment {self.loc}: allocation at {offset}, top is {self.top}")
        ext = object_extent(data_size, ref_count)
        if len(self.entries) >= self.max_entries or ext > self.free_bytes:
            raise ProtocolError(f"segment {self.loc} cannot place {oid}")
        entry = DirectoryEntry(oid, offset, data_size, ref_count, ts)
        i = bisect.bisect_left(self._keys, oid.unique)
        if i < len(self._keys) and self._keys[i] == oid.unique:
            raise ProtocolError(f"duplicate unique id {oid}")
        self._keys.insert(i, oid.unique)
        self.entries.insert(i, entry)
        start = offset + data_size
        self.data[offset:start] = bytes(data_size)
        self.data[start:start + REF_BYTES * ref_count] = _NULL_REF_BYTES * ref_count
        self.top += ext
        return entry

    def object_bytes(self, entry: DirectoryEntry) -> bytes:
        return bytes(self.data[entry.offset:entry.offset + entry.extent])

    def refs_of(self, entry: DirectoryEntry) -> list[ObjectId]:
        start = entry.offset + entry.data_size
        words = struct.unpack_from(f"<{entry.ref_count}Q", self.data, start)
        return [decode_oid(w) for w in words]

    def return_object(self, oid: ObjectId, replica: bytes) -> DirectoryEntry:
        entry = self.lookup(oid)
        if entry is None:
            raise ProtocolError(f"returned object {oid} not in segment {self.loc}")
        if len(replica) != entry.extent:
            raise ProtocolError(f"returned object {oid}: {len(replica)} bytes, "
                                f"expected {entry.extent}")
        self.data[entry.offset:entry.offset + entry.extent] = replica
        entry.ts += 1
        return entry

    def return_segment(self, image: "SegmentImage", dirty: list[ObjectId]) -> None:
        if image.loc != self.loc:
            raise ProtocolError(f"segment image {image.loc} returned to {self.loc}")
        for oid in dirty:
            entry = self.lookup(oid)
            if entry is None:
                raise ProtocolError(f"dirty object {oid} absent from segment {self.loc}")
            src = image.entry(oid)
            if src is None:
                raise ProtocolError(f"dirty object {oid} absent from returned image")
            self.data[entry.offset:entry.offset + entry.extent] = \
                image.data[src.offset:src.offset + src.extent]
            entry.ts += 1
        self.ts += 1

    def accept(self, client: int) -> None:
        self.holders.add(client)

    def discarded(self, client: int) -> None:
        if client not in self.holders:
            raise ProtocolError(f"client {client} does not hold segment {self.loc}")
        self.holders.remove(client)

    def check(self) -> None:
        """Assert directory/extent invariants (used by tests)."""
        assert self._keys == sorted(self._keys)
        assert [e.oid.unique for e in self.entries] == self._keys
        assert len(self.entries) <= self.max_entries
        spans = sorted((e.offset, e.offset + e.extent) for e in self.entries)
        end = 0
        for lo, hi in spans:
            assert lo >= end, "overlapping extents"
            end = hi
        assert end <= self.capacity
        assert sum(e.extent for e in self.entries) == self.top

    # -- wire -------------------------------------------------------------
    def image(self) -> bytes:
        parts = [HEADER.pack(self.loc.group, self.loc.segment, self.ts,
                             len(self.entries), self.free_bytes, self.capacity)]
        for e in self.entries:
            parts.append(DIR_ENTRY.pack(e.oid.encode(), e.offset, e.data_size, e.ref_count, e.ts))
        parts.append(bytes(self.data))
        return b"".join(parts)


@dataclass
class ImageEntry:
    oid: ObjectId
    offset: int
    data_size: int
    ref_count: int
    ts: int

    @property
    def extent(self) -> int:
        return object_extent(self.data_size, self.ref_count)


@dataclass
class SegmentImage:
    loc: Location
    ts: int
    free_bytes: int
    capacity: int
    entries: list[ImageEntry]
    data: bytes

    def entry(self, oid: ObjectId) -> ImageEntry | None:
        for e in self.entries:
            if e.oid == oid:
                return e
        return None

    @classmethod
    def parse(cls, raw: bytes) -> "SegmentImage":
        g, s, ts, n, free, cap = HEADER.unpack_from(raw, 0)
        pos = HEADER.size
        entries = []
        for _ in range(n):
            word, off, dsz, nref, ets = DIR_ENTRY.unpack_from(raw, pos)
            entries.append(ImageEntry(decode_oid(word), off, dsz, nref, ets))
            pos += DIR_ENTRY.size
        data = raw[pos:pos + cap]
        if len(data) != cap:
            raise ProtocolError("truncated segment image")
        return cls(Location(g, s), ts, free, cap, entries, data)

    def to_segment(self, max_entries: int) -> Segment:
        seg = Segment(self.loc, self.capacity, max_entries)
        for e in sorted(self.entries, key=lambda e: e.offset):
            seg.place(e.oid, e.offset, e.data_size, e.ref_count, e.ts)
        seg.data[:] = self.data
        seg.ts = self.ts
        if seg.free_bytes != self.free_bytes:
            raise ProtocolError("segment image free-space mismatch")
        return seg


@dataclass
class GroupTableEntry:
    descriptor: GroupDescriptor
    last_segment_id: int | None = None
    segments: list[Segment] = field(default_factory=list)
    nominate_cursor: int = 0


class StorageLayer:
    """Storage owned by one server: its groups' segments and (main only) names."""

    def __init__(self, rank: int, num_servers: int, segment_bytes: int = DEFAULT_SEGMENT_BYTES,
                 directory_entries: int = DEFAULT_DIRECTORY_ENTRIES):
        self.rank = rank
        self.num_servers = num_servers
        self.segment_bytes = segment_bytes
        self.directory_entries = directory_entries
        self.groups: list[GroupTableEntry | None] = []
        self.ids = UniqueIdStream(rank, num_servers)
        self.names: list[tuple[str, ObjectId]] = []
        self.base_cursor = 0
        self._segments: dict[Location, Segment] = {}

    # -- groups -----------------------------------------------------------
    def create_group(self, context: MovementContext, width: int, prefetch_depth: int
                     ) -> GroupTableEntry:
        if self.rank != 0:
            raise ProtocolError("only the main server creates groups")
        if not 1 <= width <= self.num_servers:
            raise ValueError(f"width {width} outside [1, {self.num_servers}]")
        if prefetch_depth < 0:
            raise ValueError("negative prefetch depth")
        gid = len(self.groups)
        if gid > MAX_GID:
            raise CapacityError("group ids exhausted")
        desc = GroupDescriptor(gid, self.base_cursor, width, prefetch_depth,
                               MovementContext(context))
        self.base_cursor = (self.base_cursor + width) % self.num_servers
        return self.add_group(desc)

    def add_group(self, desc: GroupDescriptor) -> GroupTableEntry:
        while len(self.groups) <= desc.gid:
            self.groups.append(None)
        entry = self.groups[desc.gid]
        if entry is None:
            entry = self.groups[desc.gid] = GroupTableEntry(desc)
        return entry

    def group(self, gid: int) -> GroupTableEntry | None:
        if gid == NULL_GID or gid >= len(self.groups):
            return None
        return self.groups[gid]

    def knows(self, gid: int) -> bool:
        return self.group(gid) is not None

    # -- segments ---------------------------------------------------------
    def new_segment(self, gid: int) -> Segment:
        entry = self.group(gid)
        if entry is None:
            raise ProtocolError(f"unknown group {gid}")
        sid = next_segment_id(entry.last_segment_id, self.rank, entry.descriptor,
                              self.num_servers)
        entry.last_segment_id = sid
        seg = Segment(Location(gid, sid), self.segment_bytes, self.directory_entries)
        entry.segments.append(seg)
        self._segments[seg.loc] = seg
        return seg

    def segment(self, loc: Location) -> Segment | None:
        return self._segments.get(loc)

    def create_object(self, gid: int, data_size: int, ref_count: int, client: int | None = None
                      ) -> tuple[ObjectId, Segment | None]:
        """First fit over this server's segments of ``gid``."""
        entry = self.group(gid)
        if entry is None:
            raise ProtocolError(f"unknown group {gid}")
        if object_extent(data_size, ref_count) > self.segment_bytes:
            raise ObjectTooLarge(f"object of {object_extent(data_size, ref_count)} bytes "
                                 f"exceeds segment capacity {self.segment_bytes}")
        ctx = entry.descriptor.context
        for seg in entry.segments:
            if ctx is MovementContext.SEGMENT and seg.holders - {client}:
                continue
            oid = seg.create_object(data_size, ref_count, ctx, self.ids)
            if oid != NULL_OID:
                return oid, seg
        return NULL_OID, None

    # -- names ------------------------------------------------------------
    def name_object(self, name: str, oid: ObjectId) -> None:
        if self.rank != 0:
            raise ProtocolError("only the main server holds names")
        self.names.insert(0, (name, oid))

    def object_named(self, name: str) -> ObjectId:
        if self.rank != 0:
            raise ProtocolError("only the main server holds names")
        for n, oid in self.names:
            if n == name:
                return oid
        return NULL_OID
