"""Client-side replica cache.

Replicas live behind wrappers hanging off ROT entries.  Object replicas own
their bytes; objects of a replicated segment are views into the segment's
data area.  Reference words inside replica bytes are always stored as
encoded OIDs; a wrapper's ``slots`` map records which reference slots have
been swizzled, i.e. bound to a ROT entry whose ``ref_count`` they hold.
"""
from __future__ import annotations

import itertools
import struct
from collections import Counter, deque

from . import messages as m
from .costs import CostModel
from .fabric import ClientPort, server
from .ids import (
    NULL_OID,
    NULL_OID_WORD,
    GroupDescriptor,
    Location,
    MovementContext,
    ObjectId,
    server_rank,
)
from .messages import Tag
from .recovery import Strategy, classify, target_bytes
from .rot import ResidentObjectTable, RotEntry
from .stats import StatsRecord
from .storage import (
    DEFAULT_DIRECTORY_ENTRIES,
    DEFAULT_SEGMENT_BYTES,
    REF_BYTES,
    ObjectTooLarge,
    ProtocolError,
    Segment,
    SegmentImage,
    object_extent,
    segment_footprint,
)

DEFAULT_CACHE_BYTES = 3_000_000
ENTRY_OVERHEAD = 64
RETURN_BUFFER_BYTES = 500_000
_WORD = struct.Struct("<Q")


class DanglingReference(RuntimeError):
    pass


class CacheStarvation(RuntimeError):
    pass


class ObjectWrapper:
    __slots__ = ("data_size", "ref_count", "buf", "dentry", "_ts", "segment", "slots")

    def __init__(self, data_size: int, ref_count: int, buf, ts: int = 0, dentry=None,
                 segment: "SegmentReplica | None" = None):
        self.data_size = data_size
        self.ref_count = ref_count
        self.buf = buf
        self.dentry = dentry
        self._ts = ts
        self.segment = segment
        self.slots: dict[int, RotEntry] = {}

    @property
    def ts(self) -> int:
        return self.dentry.ts if self.dentry is not None else self._ts

    @ts.setter
    def ts(self, value: int) -> None:
        if self.dentry is not None:
            self.dentry.ts = value
        else:
            self._ts = value

    @property
    def extent(self) -> int:
        return object_extent(self.data_size, self.ref_count)

    @property
    def nbytes(self) -> int:
        """Bytes charged to the cache for this wrapper alone."""
        return 0 if self.segment is not None else self.extent

    def raw(self) -> bytes:
        return bytes(self.buf)

    def ref_word(self, i: int) -> int:
        return _WORD.unpack_from(self.buf, self.data_size + REF_BYTES * i)[0]

    def set_ref_word(self, i: int, word: int) -> None:
        _WORD.pack_into(self.buf, self.data_size + REF_BYTES * i, word)


class SegmentReplica:
    def __init__(self, seg: Segment, owner: int):
        self.seg = seg
        self.loc = seg.loc
        self.owner = owner
        self.members: dict[ObjectId, RotEntry] = {}

    def dirty_oids(self) -> list[ObjectId]:
        return [oid for oid, e in self.members.items() if e.dirty]

    def view(self, dentry):
        return memoryview(self.seg.data)[dentry.offset:dentry.offset + dentry.extent]


class ReceiptPending:
    """Returned replicas awaiting receipts, FIFO per server."""

    def __init__(self):
        self.objects: dict[int, deque] = {}
        self.segments: dict[int, deque] = {}
        self._count: Counter = Counter()

    def add_objects(self, srv: int, oids) -> None:
        q = self.objects.setdefault(srv, deque())
        for oid in oids:
            q.append(oid)
            self._count[oid] += 1

    def add_segment(self, srv: int, loc: Location) -> None:
        self.segments.setdefault(srv, deque()).append(loc)
        self._count[loc] += 1

    def match(self, srv: int, receipt: m.Receipt) -> None:
        for oid in receipt.oids:
            q = self.objects.get(srv)
            if not q or q[0] != oid:
                raise ProtocolError(f"receipt for {oid} out of order from server {srv}")
            q.popleft()
            self._count[oid] -= 1
        if receipt.loc is not None:
            q = self.segments.get(srv)
            if not q or q[0] != receipt.loc:
                raise ProtocolError(f"receipt for segment {receipt.loc} out of order")
            q.popleft()
            self._count[receipt.loc] -= 1

    def pending(self, oid: ObjectId) -> bool:
        return self._count[oid] > 0 or self._count[oid.location] > 0

    def __len__(self) -> int:
        return sum(len(q) for q in self.objects.values()) + \
            sum(len(q) for q in self.segments.values())


class LocalObjectManager:
    def __init__(self, port: ClientPort, num_servers: int, *,
                 capacity: int = DEFAULT_CACHE_BYTES,
                 strategy: Strategy = Strategy.CLASSIFIED,
                 costs: CostModel | None = None,
                 segment_bytes: int = DEFAULT_SEGMENT_BYTES,
                 directory_entries: int = DEFAULT_DIRECTORY_ENTRIES,
                 entry_overhead: int = ENTRY_OVERHEAD,
                 return_buffer: int = RETURN_BUFFER_BYTES,
                 target_k: float = 15, target_hi: float = 0.25, target_lo: float = 0.125):
        self.port = port
        self.rank = port.pid.rank
        self.num_servers = num_servers
        self.capacity = capacity
        self.strategy = Strategy(strategy)
        self.costs = costs or CostModel()
        self.segment_bytes = segment_bytes
        self.directory_entries = directory_entries
        self.entry_overhead = entry_overhead
        self.return_buffer = return_buffer
        self.target_params = (target_k, target_hi, target_lo)
        self.stats = StatsRecord(identity=str(port.pid))
        self.rot = ResidentObjectTable()
        self.groups: dict[int, GroupDescriptor] = {}
        self.segments: dict[Location, SegmentReplica] = {}
        self.pending = ReceiptPending()
        self.used = 0
        self.reserved = 0
        self.awaiting: set[ObjectId] = set()
        self._req = itertools.count(1)
        self._group_replies: dict[int, GroupDescriptor] = {}
        self._create_replies: dict[int, m.CreateReply] = {}
        self._named_replies: dict[int, ObjectId] = {}
        self._grants: dict[ObjectId, m.Grant] = {}
        self._acks = 0
        self._epoch = 0
        self._returns: dict[int, list] = {}
        self._return_bytes: dict[int, int] = {}
        self.closed = False
        self.access_log: set[ObjectId] = set()
        self.access_bytes = 0

    # -- basics -----------------------------------------------------------
    @property
    def clock(self) -> int:
        return self.port.clock

    def _tick(self, ticks: int) -> None:
        self.port.clock += ticks

    @property
    def free(self) -> int:
        return self.capacity - self.used - self.reserved

    def _send(self, dst_rank: int, tag: Tag, payload) -> None:
        self._tick(self.costs.client_send)
        self.stats.bump("messages_sent")
        self.port.send(server(dst_rank), tag, payload, payload.nbytes())

    def owner(self, oid_or_loc) -> int:
        desc = self.groups[oid_or_loc.group]
        return server_rank(oid_or_loc.segment, desc, self.num_servers)

    def _reserve_size(self, desc: GroupDescriptor) -> int:
        if desc.context is MovementContext.SEGMENT:
            return (segment_footprint(self.segment_bytes, self.directory_entries)
                    + self.directory_entries * self.entry_overhead)
        return self.segment_bytes

    def recompute_used(self) -> int:
        total = self.entry_overhead * len(self.rot)
        for e in self.rot.mru():
            if e.wrapper is not None:
                total += e.wrapper.nbytes
        total += len(self.segments) * segment_footprint(self.segment_bytes,
                                                         self.directory_entries)
        return total

    # -- incoming messages --------------------------------------------------
    def attend(self) -> None:
        """Catch up with simulated time and handle whatever has arrived."""
        self.port.yield_now()
        while self.port.mailbox:
            self._handle(self.port.mailbox.popleft())

    def _await(self, cond, reason: str) -> None:
        port = self.port
        while not cond():
            if port.mailbox:
                self._handle(port.mailbox.popleft())
            else:
                port.block(reason)

    def _handle(self, env) -> None:
        if env.deliver_tick > self.port.clock:
            self.port.clock = env.deliver_tick
        cost = self.costs.client_handling(env.nbytes)
        self._tick(cost)
        self.stats.bump("messages_received")
        self.stats.op("incoming_message").record(cost)
        p = env.payload
        tag = env.tag
        if tag is Tag.REPLICA_OBJECT:
            self._on_replica_object(p)
        elif tag is Tag.REPLICA_SEGMENT:
            self._on_replica_segment(p, env.src.rank)
        elif tag is Tag.RECEIPT:
            self.pending.match(env.src.rank, p)
        elif tag is Tag.GROUP_NOTIFY:
            self.groups[p.descriptor.gid] = p.descriptor
            if p.requester == self.rank and p.req is not None:
                self._group_replies[p.req] = p.descriptor
        elif tag is Tag.CREATE_REPLY:
            self._create_replies[p.req] = p
        elif tag is Tag.NAMED_REPLY:
            self._named_replies[p.req] = p.oid
        elif tag is Tag.GRANT:
            self._grants[p.oid] = p
        elif tag is Tag.SYNC_ACK:
            self._acks += 1
        else:
            raise ProtocolError(f"client {self.rank} cannot handle {tag!r}")

    def _on_replica_object(self, p: m.ReplicaObject) -> None:
        if p.fault:
            raise DanglingReference(f"no object {p.oid} on its server")
        entry = self.rot.search(p.oid, touch=False)
        if p.oid in self.awaiting and entry is not None and entry.wrapper is None:
            self._install_object(entry, p)
            if p.prefetched:
                self.stats.bump("prefetched_accepted")
            return
        if p.prefetched:
            self._accept_prefetched(p, entry)

    def _on_replica_segment(self, p: m.ReplicaSegment, src: int) -> None:
        if p.oid in self.awaiting or p.oid.location in self.segments:
            self._install_segment(p.image, src)

    def _accept_prefetched(self, p: m.ReplicaObject, entry: RotEntry | None) -> None:
        desc = self.groups.get(p.oid.group)
        extent = object_extent(p.data_size, p.ref_count)
        ok = desc is not None and not self.pending.pending(p.oid)
        if ok and entry is not None and entry.wrapper is not None:
            w = entry.wrapper
            ok = p.ts > w.ts and not entry.dirty
            if ok:
                self._drop_slots(w)
                w.buf[:] = p.raw
                w.ts = p.ts
                self.rot.touch(entry)
                self.stats.bump("prefetched_accepted")
            else:
                self.stats.bump("prefetched_refused")
            return
        need = extent + (self.entry_overhead if entry is None else 0)
        if not ok or self.free < need:
            self.stats.bump("prefetched_refused")
            return
        if entry is None:
            entry = self.rot.insert(p.oid)
            self.used += self.entry_overhead
        else:
            self.rot.touch(entry)
        self._install_object(entry, p)
        entry.unused_prefetch = True
        self.stats.bump("prefetched_accepted")

    # -- installation -------------------------------------------------------
    def _install_object(self, entry: RotEntry, p: m.ReplicaObject) -> None:
        w = ObjectWrapper(p.data_size, p.ref_count, bytearray(p.raw), p.ts)
        entry.wrapper = w
        entry.dirty = False
        self.used += w.nbytes

    def _attach(self, rep: SegmentReplica, dentry, entry: RotEntry) -> None:
        entry.wrapper = ObjectWrapper(dentry.data_size, dentry.ref_count, rep.view(dentry),
                                      dentry=dentry, segment=rep)
        entry.segment = rep
        entry.dirty = False
        rep.members[dentry.oid] = entry

    def _entry_for(self, oid: ObjectId, required: bool) -> RotEntry | None:
        e = self.rot.search(oid, touch=False)
        if e is None:
            if not required and self.free < self.entry_overhead:
                return None
            e = self.rot.insert(oid)
            self.used += self.entry_overhead
        return e

    def _install_segment(self, raw: bytes, owner: int, force: ObjectId | None = None
                         ) -> SegmentReplica:
        image = SegmentImage.parse(raw)
        rep = self.segments.get(image.loc)
        if rep is None:
            seg = image.to_segment(self.directory_entries)
            rep = SegmentReplica(seg, owner)
            self.segments[seg.loc] = rep
            self.used += segment_footprint(self.segment_bytes, self.directory_entries)
            for d in seg.entries:
                e = self._entry_for(d.oid, required=True)
                if e.wrapper is None:
                    self._attach(rep, d, e)
            self._send(owner, Tag.ACCEPT_SEGMENT, m.SegmentNotice(self.rank, seg.loc))
            return rep
        seg = rep.seg
        for ie in sorted(image.entries, key=lambda x: x.offset):
            d = seg.lookup(ie.oid)
            src = image.data[ie.offset:ie.offset + ie.extent]
            if d is None:
                d = seg.place(ie.oid, ie.offset, ie.data_size, ie.ref_count, ie.ts)
                seg.data[d.offset:d.offset + d.extent] = src
                e = self._entry_for(ie.oid, required=False)
                if e is not None and e.wrapper is None:
                    self._attach(rep, d, e)
                continue
            if ie.ts <= d.ts:
                continue
            e = rep.members.get(ie.oid)
            if e is not None and e.dirty and ie.oid != force:
                continue
            seg.data[d.offset:d.offset + d.extent] = src
            d.ts = ie.ts
            if e is not None:
                self._drop_slots(e.wrapper)
                e.dirty = False
        seg.ts = max(seg.ts, image.ts)
        return rep

    def _drop_slots(self, w: ObjectWrapper) -> None:
        for e in w.slots.values():
            e.ref_count -= 1
        w.slots.clear()

    # -- space management ---------------------------------------------------
    def ensure(self, nbytes: int) -> None:
        """Make ``nbytes`` free, recovering space if needed."""
        if self.free >= nbytes:
            return
        self.recover(nbytes)
        if self.free < nbytes:
            raise CacheStarvation(f"client {self.rank}: need {nbytes} bytes, "
                                  f"{self.free} free after recovery")

    def recover(self, requested: int, strategy: Strategy | None = None) -> int:
        strategy = strategy or self.strategy
        t0 = self.clock
        evicted = 0
        if strategy is Strategy.DUMP:
            freed, evicted = self._recover_lru(self.capacity)
        else:
            target = target_bytes(requested, self.capacity, *self.target_params)
            if strategy is Strategy.SIMPLE_LRU:
                freed, evicted = self._recover_lru(target)
            else:
                freed, evicted = self._recover_classified(target)
        self._tick(self.costs.recovery_base + self.costs.recovery_per_item * evicted)
        self.stats.op("space_recovery").record(self.clock - t0)
        return freed

    def _unit_bytes(self, unit) -> int:
        if isinstance(unit, SegmentReplica):
            return segment_footprint(self.segment_bytes, self.directory_entries)
        return unit.wrapper.nbytes

    @staticmethod
    def _unit_protected(unit) -> bool:
        if isinstance(unit, SegmentReplica):
            return any(e.protected for e in unit.members.values())
        return bool(unit.protected)

    def _recover_lru(self, target: int) -> tuple[int, int]:
        freed = 0
        chosen, deletable, seen = [], [], set()
        for e in self.rot.lru():
            if freed >= target:
                break
            if e.protected:
                continue
            if e.wrapper is not None:
                unit = e.segment if e.segment is not None else e
                if unit in seen:
                    continue
                seen.add(unit)
                if self._unit_protected(unit):
                    continue
                chosen.append(unit)
                freed += self._unit_bytes(unit)
            elif e.ref_count == 0:
                deletable.append(e)
                freed += self.entry_overhead
        for unit in chosen:
            self._evict(unit)
        self._flush_returns()
        for e in deletable:
            self.rot.remove(e)
            self.used -= self.entry_overhead
        return freed, len(chosen) + len(deletable)

    def _class_key(self, unit):
        if self._unit_protected(unit):
            return None
        if isinstance(unit, SegmentReplica):
            es = unit.members.values()
            return (any(e.ref_count > 0 for e in es), any(e.dirty for e in es), True)
        return (unit.ref_count > 0, unit.dirty, False)

    def _recover_classified(self, target: int) -> tuple[int, int]:
        def units():
            for e in self.rot.mru():
                if e.wrapper is not None:
                    yield e.segment if e.segment is not None else e

        freed = 0
        chosen = []
        for cls in classify(units(), self._class_key):
            for unit in cls:
                if freed >= target:
                    break
                chosen.append(unit)
                freed += self._unit_bytes(unit)
        for unit in chosen:
            self._evict(unit)
        self._flush_returns()
        evicted = len(chosen)
        if freed < target:
            more, n = self._recover_lru(target - freed)
            freed += more
            evicted += n
        return freed, evicted

    def _retire(self, e: RotEntry) -> None:
        self._drop_slots(e.wrapper)
        e.wrapper = None
        e.segment = None
        e.dirty = False
        if e.unused_prefetch:
            e.unused_prefetch = False
            self.stats.bump("prefetched_unused")

    def _evict(self, unit) -> None:
        if isinstance(unit, SegmentReplica):
            dirty = unit.dirty_oids()
            if dirty:
                msg = m.ReturnSegment(self.rank, unit.loc, unit.seg.image(), dirty, discard=True)
                self._send(unit.owner, Tag.RETURN_SEGMENT, msg)
                self.pending.add_segment(unit.owner, unit.loc)
                self.stats.bump("replicas_discarded_dirty")
            else:
                self._send(unit.owner, Tag.DISCARD_NOTICE, m.SegmentNotice(self.rank, unit.loc))
                self.stats.bump("replicas_discarded_clean")
            for e in unit.members.values():
                self._retire(e)
            unit.members.clear()
            del self.segments[unit.loc]
            self.used -= segment_footprint(self.segment_bytes, self.directory_entries)
            return
        e = unit
        w = e.wrapper
        if e.dirty:
            self._buffer_return(e.oid, w.raw())
            self.stats.bump("replicas_discarded_dirty")
        else:
            self.stats.bump("replicas_discarded_clean")
        self.used -= w.nbytes
        self._retire(e)

    def _buffer_return(self, oid: ObjectId, raw: bytes) -> None:
        srv = self.owner(oid)
        size = m.OID_BYTES + 4 + len(raw)
        if self._returns.get(srv) and self._return_bytes[srv] + size > self.return_buffer:
            self._flush_one(srv)
        self._returns.setdefault(srv, []).append((oid, raw))
        self._return_bytes[srv] = self._return_bytes.get(srv, 0) + size

    def _flush_one(self, srv: int) -> None:
        objs = self._returns.pop(srv, None)
        self._return_bytes.pop(srv, None)
        if objs:
            self._send(srv, Tag.RETURN_OBJECTS, m.ReturnObjects(self.rank, objs))
            self.pending.add_objects(srv, [oid for oid, _ in objs])

    def _flush_returns(self) -> None:
        for srv in sorted(self._returns):
            self._flush_one(srv)

    # -- lookup & fetch -----------------------------------------------------
    def group_desc(self, gid: int) -> GroupDescriptor:
        if gid not in self.groups:
            self._await(lambda: gid in self.groups, f"group {gid}")
        return self.groups[gid]

    def find(self, oid: ObjectId, load: bool = True) -> RotEntry:
        """ROT lookup, creating the entry (and fetching) when absent."""
        if oid.is_null:
            raise DanglingReference("NULL reference dereferenced")
        self._tick(self.costs.rot_search)
        self.stats.op("rot_search").record(self.costs.rot_search)
        e = self.rot.search(oid)
        if e is None:
            self.group_desc(oid.group)
            self.ensure(self.entry_overhead)
            e = self.rot.insert(oid)
            self.used += self.entry_overhead
        if load and e.wrapper is None:
            self.load(e)
        return e

    def load(self, e: RotEntry) -> ObjectWrapper:
        if e.wrapper is None:
            rep = self.segments.get(e.oid.location)
            d = rep.seg.lookup(e.oid) if rep is not None else None
            if d is not None:
                self._attach(rep, d, e)
            else:
                self.attend()
                if e.wrapper is None:
                    self._fetch(e)
        return e.wrapper

    def access(self, e: RotEntry) -> ObjectWrapper:
        """Wrapper of a replica about to be read or written."""
        w = e.wrapper if e.wrapper is not None else self.load(e)
        self.rot.touch(e)
        e.unused_prefetch = False
        self._tick(self.costs.access)
        if e.oid not in self.access_log:
            self.access_log.add(e.oid)
            self.access_bytes += w.extent
        return w

    def _fetch(self, e: RotEntry) -> None:
        t0 = self.clock
        desc = self.group_desc(e.oid.group)
        size = self._reserve_size(desc)
        e.protected += 1
        try:
            self.ensure(size)
            self.reserved += size
            self.awaiting.add(e.oid)
            try:
                self._send(self.owner(e.oid), Tag.FETCH, m.Fetch(self.rank, e.oid))
                self._await(lambda: e.wrapper is not None, f"fetch {e.oid}")
            finally:
                self.awaiting.discard(e.oid)
                self.reserved -= size
        finally:
            e.protected -= 1
        self.stats.op("fetch").record(self.clock - t0)

    # -- operations ---------------------------------------------------------
    def create_group(self, context: MovementContext, width: int = 1,
                     prefetch_depth: int = 0) -> int:
        t0 = self.clock
        if not 1 <= width <= self.num_servers:
            raise ValueError(f"width {width} outside [1, {self.num_servers}]")
        if prefetch_depth < 0:
            raise ValueError("negative prefetch depth")
        req = next(self._req)
        self._send(0, Tag.CREATE_GROUP,
                   m.CreateGroup(req, MovementContext(context), width, prefetch_depth))
        self._await(lambda: req in self._group_replies, "group creation")
        desc = self._group_replies.pop(req)
        self.stats.op("create_group").record(self.clock - t0)
        return desc.gid

    def create_object(self, gid: int, data_size: int, ref_count: int) -> RotEntry:
        t0 = self.clock
        if data_size < 0 or ref_count < 0:
            raise ValueError("negative object size")
        extent = object_extent(data_size, ref_count)
        if extent > self.segment_bytes:
            raise ObjectTooLarge(f"object of {extent} bytes exceeds segment capacity "
                                 f"{self.segment_bytes}")
        self.attend()
        desc = self.group_desc(gid)
        segmented = desc.context is MovementContext.SEGMENT
        size = (self._reserve_size(desc) if segmented else extent) + self.entry_overhead
        self.ensure(size)
        self.reserved += size
        req = next(self._req)
        try:
            self._send(desc.base_server, Tag.CREATE_OBJECT,
                       m.CreateObject(req, self.rank, gid, data_size, ref_count))
            self._await(lambda: req in self._create_replies, "object creation")
        finally:
            self.reserved -= size
        reply = self._create_replies.pop(req)
        if reply.error:
            raise ObjectTooLarge(reply.error)
        oid = reply.oid
        self._tick(self.costs.create_local)
        if segmented:
            if reply.image is not None:
                self._install_segment(reply.image, self.owner(oid))
                e = self._entry_for(oid, required=True)
            else:
                e = self._entry_for(oid, required=True)
                rep = self.segments.get(oid.location)
                if rep is not None:
                    d = rep.seg.place(oid, reply.offset, data_size, ref_count)
                    rep.seg.ts += 1
                    self._attach(rep, d, e)
            if e.wrapper is None:
                self._fetch(e)
        else:
            e = self._entry_for(oid, required=True)
            buf = bytearray(data_size) + _WORD.pack(NULL_OID_WORD) * ref_count
            e.wrapper = ObjectWrapper(data_size, ref_count, buf, 0)
            self.used += extent
        e.dirty = True
        self.rot.touch(e)
        self.stats.op("create_object").record(self.clock - t0)
        return e

    def mark_dirty(self, e: RotEntry) -> None:
        e.dirty = True

    def wait(self, e: RotEntry) -> None:
        t0 = self.clock
        self.attend()
        desc = self.group_desc(e.oid.group)
        if desc.context is MovementContext.SEGMENT:
            rep = self.segments.get(e.oid.location)
            ts = rep.seg.ts if rep is not None else -1
        else:
            ts = e.wrapper.ts if e.wrapper is not None else -1
        size = self._reserve_size(desc)
        e.protected += 1
        try:
            self.ensure(size)
            self.reserved += size
            try:
                self._send(self.owner(e.oid), Tag.WAIT, m.Wait(self.rank, e.oid, ts))
                self._await(lambda: e.oid in self._grants, f"grant {e.oid}")
            finally:
                self.reserved -= size
            grant = self._grants.pop(e.oid)
            rep_msg = grant.replica
            if isinstance(rep_msg, m.ReplicaSegment):
                self._install_segment(rep_msg.image, self.owner(e.oid), force=e.oid)
                if e.wrapper is None:
                    self.load(e)
            elif isinstance(rep_msg, m.ReplicaObject):
                if e.wrapper is not None:
                    w = e.wrapper
                    self._drop_slots(w)
                    w.buf[:] = rep_msg.raw
                    w.ts = rep_msg.ts
                    e.dirty = False
                else:
                    self._install_object(e, rep_msg)
        finally:
            e.protected -= 1
        self.stats.op("wait").record(self.clock - t0)

    def signal(self, e: RotEntry) -> None:
        t0 = self.clock
        desc = self.group_desc(e.oid.group)
        srv = self.owner(e.oid)
        if desc.context is MovementContext.SEGMENT:
            rep = self.segments.get(e.oid.location)
            dirty = rep.dirty_oids() if rep is not None else []
            if dirty:
                msg = m.ReturnSegment(self.rank, rep.loc, rep.seg.image(), dirty, discard=False)
                self._send(rep.owner, Tag.RETURN_SEGMENT, msg)
                self.pending.add_segment(rep.owner, rep.loc)
                for oid in dirty:
                    d = rep.seg.lookup(oid)
                    d.ts += 1
                    rep.members[oid].dirty = False
                rep.seg.ts += 1
        elif e.dirty and e.wrapper is not None:
            self._send(srv, Tag.RETURN_OBJECTS, m.ReturnObjects(self.rank, [(e.oid, e.wrapper.raw())]))
            self.pending.add_objects(srv, [e.oid])
            e.wrapper.ts += 1
            e.dirty = False
        self._send(srv, Tag.SIGNAL, m.Signal(self.rank, e.oid))
        self.stats.op("signal").record(self.clock - t0)

    def synchronise(self) -> None:
        t0 = self.clock
        self.attend()
        self._epoch += 1
        for s in range(self.num_servers):
            self._send(s, Tag.SYNC, m.Sync(self.rank, self._epoch))
        goal = self._epoch * self.num_servers
        self._await(lambda: self._acks >= goal, "synchronise")
        self.stats.op("synchronise").record(self.clock - t0)

    def name_object(self, name: str, oid: ObjectId) -> None:
        self._send(0, Tag.NAME, m.Name(name, oid))

    def object_named(self, name: str) -> ObjectId:
        req = next(self._req)
        self._send(0, Tag.NAMED_QUERY, m.NamedQuery(req, self.rank, name))
        self._await(lambda: req in self._named_replies, f"name {name!r}")
        return self._named_replies.pop(req)

    def dump(self) -> None:
        if self.rot.size:
            self.recover(self.capacity, Strategy.DUMP)

    def close(self) -> None:
        if self.closed:
            raise ProtocolError(f"client {self.rank} closed twice")
        self.closed = True
        self._flush_returns()
        for e in self.rot.mru():
            if e.unused_prefetch:
                e.unused_prefetch = False
                self.stats.bump("prefetched_unused")
        for s in range(self.num_servers):
            self._send(s, Tag.CLOSE, m.Close(self.rank))
        self.stats.counters["execution_ticks"] = self.clock

    def check(self) -> None:
        """Cheap consistency checks used by tests."""
        self.rot.check()
        assert self.used == self.recompute_used(), (self.used, self.recompute_used())
        assert self.used <= self.capacity
        for e in self.rot.mru():
            assert e.ref_count >= 0
            if e.segment is not None:
                assert e.wrapper is not None and e.segment.loc in self.segments
