"""Server actor: message handlers over one server's storage layer."""
from __future__ import annotations

from collections import deque

from . import messages as m
from .costs import CostModel, PrefetchPriority
from .fabric import Envelope, Fabric, Kind, ProcessId, client, server
from .ids import NULL_OID, MovementContext, ObjectId, server_rank
from .messages import Tag
from .stats import StatsRecord
from .storage import (
    DEFAULT_DIRECTORY_ENTRIES,
    DEFAULT_SEGMENT_BYTES,
    ObjectTooLarge,
    ProtocolError,
    SegmentImage,
    StorageLayer,
    object_extent,
)

# messages that name a group and must wait until its notification arrives
_GROUP_BOUND = {Tag.CREATE_OBJECT, Tag.FETCH, Tag.PREFETCH, Tag.RETURN_OBJECTS,
                Tag.RETURN_SEGMENT, Tag.DISCARD_NOTICE, Tag.ACCEPT_SEGMENT, Tag.WAIT,
                Tag.SIGNAL}


_OP_OF = {Tag.CREATE_GROUP: "create_group", Tag.CREATE_OBJECT: "create_object",
          Tag.FETCH: "fetch", Tag.WAIT: "wait", Tag.SIGNAL: "signal",
          Tag.SYNC: "synchronise"}


def _group_of(payload) -> int:
    if isinstance(payload, m.CreateObject):
        return payload.gid
    if isinstance(payload, (m.Fetch, m.Prefetch, m.Wait, m.Signal)):
        return payload.oid.group
    if isinstance(payload, (m.ReturnSegment, m.SegmentNotice)):
        return payload.loc.group
    if isinstance(payload, m.ReturnObjects):
        return payload.objects[0][0].group
    raise TypeError(payload)


class Server:
    def __init__(self, fabric: Fabric, rank: int, num_servers: int, num_clients: int, *,
                 segment_bytes: int = DEFAULT_SEGMENT_BYTES,
                 directory_entries: int = DEFAULT_DIRECTORY_ENTRIES,
                 prefetch: PrefetchPriority = PrefetchPriority.HIGH,
                 costs: CostModel | None = None):
        self.fabric = fabric
        self.pid = server(rank)
        self.rank = rank
        self.num_servers = num_servers
        self.num_clients = num_clients
        self.clock = 0
        self.costs = costs or CostModel()
        self.prefetch = prefetch
        self.storage = StorageLayer(rank, num_servers, segment_bytes, directory_entries)
        self.sync_count = 0
        self.sync_epoch = 0
        self.closed: set[int] = set()
        self.terminated = False
        self.prefetch_queue: deque[m.Prefetch] = deque()
        self.deferred: dict[int, list[Envelope]] = {}
        self.stats = StatsRecord(identity=str(self.pid))
        fabric.add_server(self)
        self._handlers = {
            Tag.CREATE_GROUP: self._on_create_group,
            Tag.GROUP_NOTIFY: self._on_group_notify,
            Tag.CREATE_OBJECT: self._on_create_object,
            Tag.FETCH: self._on_fetch,
            Tag.PREFETCH: self._on_prefetch,
            Tag.RETURN_OBJECTS: self._on_return_objects,
            Tag.RETURN_SEGMENT: self._on_return_segment,
            Tag.DISCARD_NOTICE: self._on_discard,
            Tag.ACCEPT_SEGMENT: self._on_accept,
            Tag.NAME: self._on_name,
            Tag.NAMED_QUERY: self._on_named_query,
            Tag.WAIT: self._on_wait,
            Tag.SIGNAL: self._on_signal,
            Tag.SYNC: self._on_sync,
            Tag.CLOSE: self._on_close,
        }

    @property
    def is_main(self) -> bool:
        return self.rank == 0

    # -- fabric interface -------------------------------------------------
    def on_message(self, env: Envelope) -> None:
        start = max(self.clock, env.deliver_tick)
        self.stats.bump("idle_ticks", start - self.clock)
        self.clock = start
        self.stats.bump("messages_received")
        self.clock += self.costs.server_handling(env.nbytes)
        if self.fabric.tracing:
            self.fabric.events.append(("handled", self.pid, env.src, env.tag, env.seq, start))
        if self.terminated:
            if env.tag is Tag.PREFETCH:
                return
            raise ProtocolError(f"{self.pid} received {env.tag.name} after termination")
        self._dispatch(env)
        op = _OP_OF.get(env.tag)
        if op is not None:
            self.stats.op(op).record(self.clock - start)

    def has_idle_work(self) -> bool:
        return bool(self.prefetch_queue) and not self.terminated

    def on_idle(self) -> None:
        req = self.prefetch_queue.popleft()
        self.clock += self.costs.server_handling(0)
        self._serve_prefetch(req)

    # -- helpers ----------------------------------------------------------
    def _dispatch(self, env: Envelope) -> None:
        if env.tag in _GROUP_BOUND:
            gid = _group_of(env.payload)
            if not self.storage.knows(gid):
                self.deferred.setdefault(gid, []).append(env)
                return
        handler = self._handlers.get(env.tag)
        if handler is None:
            raise ProtocolError(f"{self.pid} cannot handle {env.tag.name}")
        handler(env.src, env.payload)

    def _send(self, dst: ProcessId, tag: Tag, payload) -> None:
        self.clock += self.costs.server_send
        self.stats.bump("messages_sent")
        self.fabric.send(self.pid, dst, tag, payload, payload.nbytes(), self.clock)

    def _charge(self, nbytes: int) -> None:
        self.clock += round(self.costs.server_per_byte * nbytes)

    def _owner(self, oid: ObjectId) -> int | None:
        g = self.storage.group(oid.group)
        if g is None:
            return None
        return server_rank(oid.segment, g.descriptor, self.num_servers)

    def _locate(self, oid: ObjectId):
        seg = self.storage.segment(oid.location)
        if seg is None:
            return None, None
        return seg, seg.lookup(oid)

    # -- groups -----------------------------------------------------------
    def _on_create_group(self, src: ProcessId, p: m.CreateGroup) -> None:
        if not self.is_main:
            raise ProtocolError(f"CREATE_GROUP received by non-main server {self.rank}")
        entry = self.storage.create_group(p.context, p.width, p.prefetch_depth)
        note = m.GroupNotify(entry.descriptor, requester=src.rank, req=p.req)
        self.stats.bump("messages_sent", len(self.fabric.processes()) - 1)
        self.fabric.broadcast(self.pid, Tag.GROUP_NOTIFY, note, note.nbytes())

    def _on_group_notify(self, src: ProcessId, p: m.GroupNotify) -> None:
        self.storage.add_group(p.descriptor)
        for env in self.deferred.pop(p.descriptor.gid, []):
            self._dispatch(env)

    # -- creation ---------------------------------------------------------
    def _on_create_object(self, src: ProcessId, p: m.CreateObject) -> None:
        g = self.storage.group(p.gid)
        desc = g.descriptor
        reply_to = client(p.client)
        if object_extent(p.data_size, p.ref_count) > self.storage.segment_bytes:
            self._send(reply_to, Tag.CREATE_REPLY,
                       m.CreateReply(p.req, None, error="object larger than a segment"))
            return
        if p.nominated:
            seg = self.storage.new_segment(p.gid)
            oid = seg.create_object(p.data_size, p.ref_count, desc.context, self.storage.ids)
            self._reply_created(p, oid, seg)
        elif p.returned:
            # the request went round every server of the group: nominate one
            k = g.nominate_cursor % desc.width
            g.nominate_cursor += 1
            nominee = (desc.base_server + k) % self.num_servers
            fwd = m.CreateObject(p.req, p.client, p.gid, p.data_size, p.ref_count,
                                 p.hops, nominated=True)
            self._send(server(nominee), Tag.CREATE_OBJECT, fwd)
        else:
            oid, seg = self.storage.create_object(p.gid, p.data_size, p.ref_count, p.client)
            if oid != NULL_OID:
                self._reply_created(p, oid, seg)
            else:
                hops = p.hops + 1
                if hops >= desc.width:
                    nxt, ret = desc.base_server, True
                else:
                    nxt, ret = (self.rank + 1) % self.num_servers, False
                fwd = m.CreateObject(p.req, p.client, p.gid, p.data_size, p.ref_count,
                                     hops, returned=ret)
                self._send(server(nxt), Tag.CREATE_OBJECT, fwd)

    def _reply_created(self, p: m.CreateObject, oid: ObjectId, seg) -> None:
        entry = seg.lookup(oid)
        image = None
        if seg is not None and self.storage.group(p.gid).descriptor.context is MovementContext.SEGMENT:
            if p.client not in seg.holders:
                image = seg.image()
                self._charge(len(image))
                seg.accept(p.client)
        self._send(client(p.client), Tag.CREATE_REPLY,
                   m.CreateReply(p.req, oid, entry.offset, image))

    # -- fetch & prefetch -------------------------------------------------
    def _replica(self, seg, entry, prefetched: bool = False) -> m.ReplicaObject:
        raw = seg.object_bytes(entry)
        self._charge(len(raw))
        return m.ReplicaObject(entry.oid, entry.ts, entry.data_size, entry.ref_count, raw,
                               prefetched=prefetched)

    def _on_fetch(self, src: ProcessId, p: m.Fetch) -> None:
        seg, entry = self._locate(p.oid)
        dst = client(p.client)
        if entry is None:
            self._send(dst, Tag.REPLICA_OBJECT,
                       m.ReplicaObject(p.oid, 0, 0, 0, b"", fault=True))
            return
        desc = self.storage.group(p.oid.group).descriptor
        if desc.context is MovementContext.SEGMENT:
            image = seg.image()
            self._charge(len(image))
            self._send(dst, Tag.REPLICA_SEGMENT, m.ReplicaSegment(p.oid, image))
        else:
            self._send(dst, Tag.REPLICA_OBJECT, self._replica(seg, entry))
            if desc.prefetch_depth > 0:
                self._generate(p.client, seg, entry, desc.prefetch_depth - 1)

    def _generate(self, client_rank: int, seg, entry, depth: int) -> None:
        children = []
        for ref in seg.refs_of(entry):
            if ref == NULL_OID:
                continue
            owner = self._owner(ref)
            if owner is None:
                continue
            children.append((owner, m.Prefetch(client_rank, ref, depth)))
        if self.prefetch is PrefetchPriority.HIGH:
            # served depth first, straight away when the child lives here
            for owner, req in children:
                if owner == self.rank:
                    self._serve_prefetch(req)
                else:
                    self._send(server(owner), Tag.PREFETCH, req)
            return
        local = []
        for owner, req in children:
            if owner == self.rank:
                local.append(req)
            else:
                self._send(server(owner), Tag.PREFETCH, req)
        self._enqueue(local)

    def _enqueue(self, reqs: list[m.Prefetch]) -> None:
        if self.prefetch is PrefetchPriority.LOW_DFS:
            for req in reversed(reqs):
                self.prefetch_queue.appendleft(req)
        else:
            self.prefetch_queue.extend(reqs)

    def _on_prefetch(self, src: ProcessId, p: m.Prefetch) -> None:
        if self.prefetch is PrefetchPriority.HIGH:
            self._serve_prefetch(p)
        else:
            self._enqueue([p])

    def _serve_prefetch(self, p: m.Prefetch) -> None:
        if p.client in self.closed:
            return
        g = self.storage.group(p.oid.group)
        if g is None or g.descriptor.context is MovementContext.SEGMENT:
            return
        seg, entry = self._locate(p.oid)
        if entry is None:
            return
        self.stats.bump("prefetch_served")
        self._send(client(p.client), Tag.REPLICA_OBJECT, self._replica(seg, entry, True))
        if p.depth > 0:
            self._generate(p.client, seg, entry, p.depth - 1)

    # -- returns ----------------------------------------------------------
    def _on_return_objects(self, src: ProcessId, p: m.ReturnObjects) -> None:
        oids = []
        for oid, raw in p.objects:
            seg = self.storage.segment(oid.location)
            if seg is None:
                raise ProtocolError(f"returned object {oid} has no segment on {self.pid}")
            seg.return_object(oid, raw)
            oids.append(oid)
        self._send(src, Tag.RECEIPT, m.Receipt(oids=oids))

    def _on_return_segment(self, src: ProcessId, p: m.ReturnSegment) -> None:
        seg = self.storage.segment(p.loc)
        if seg is None:
            raise ProtocolError(f"returned segment {p.loc} unknown on {self.pid}")
        seg.return_segment(SegmentImage.parse(p.image), p.dirty)
        if p.discard:
            seg.discarded(p.client)
        self._send(src, Tag.RECEIPT, m.Receipt(loc=p.loc))

    def _on_discard(self, src: ProcessId, p: m.SegmentNotice) -> None:
        seg = self.storage.segment(p.loc)
        if seg is None:
            raise ProtocolError(f"discard notice for unknown segment {p.loc}")
        seg.discarded(p.client)

    def _on_accept(self, src: ProcessId, p: m.SegmentNotice) -> None:
        seg = self.storage.segment(p.loc)
        if seg is None:
            raise ProtocolError(f"accept notice for unknown segment {p.loc}")
        seg.accept(p.client)

    # -- naming -----------------------------------------------------------
    def _on_name(self, src: ProcessId, p: m.Name) -> None:
        self.storage.name_object(p.name, p.oid)

    def _on_named_query(self, src: ProcessId, p: m.NamedQuery) -> None:
        self._send(src, Tag.NAMED_REPLY, m.NamedReply(p.req, self.storage.object_named(p.name)))

    # -- semaphores -------------------------------------------------------
    def _sem_entry(self, oid: ObjectId):
        seg, entry = self._locate(oid)
        if entry is None:
            raise ProtocolError(f"semaphore operation on unknown object {oid}")
        return seg, entry

    def _on_wait(self, src: ProcessId, p: m.Wait) -> None:
        seg, entry = self._sem_entry(p.oid)
        entry.wait_queue.append((p.client, p.ts))
        if self.fabric.tracing:
            self.fabric.events.append(("wait", self.pid, p.oid, p.client, self.clock))
        self._notify(seg, entry)

    def _on_signal(self, src: ProcessId, p: m.Signal) -> None:
        seg, entry = self._sem_entry(p.oid)
        if entry.sem_holder != p.client:
            raise ProtocolError(f"client {p.client} signalled {p.oid} without a matching wait")
        entry.sem_holder = None
        entry.sem_value += 1
        if self.fabric.tracing:
            self.fabric.events.append(("signal", self.pid, p.oid, p.client, self.clock))
        self._notify(seg, entry)

    def _notify(self, seg, entry) -> None:
        if entry.sem_value <= 0 or not entry.wait_queue:
            return
        entry.sem_value -= 1
        who, their_ts = entry.wait_queue.popleft()
        entry.sem_holder = who
        desc = self.storage.group(entry.oid.group).descriptor
        replica = None
        if desc.context is MovementContext.SEGMENT:
            if their_ts < seg.ts:
                image = seg.image()
                self._charge(len(image))
                replica = m.ReplicaSegment(entry.oid, image)
        elif their_ts < entry.ts:
            replica = self._replica(seg, entry)
        if self.fabric.tracing:
            self.fabric.events.append(("grant", self.pid, entry.oid, who, self.clock,
                                       replica is not None))
        self._send(client(who), Tag.GRANT, m.Grant(entry.oid, replica))

    # -- barrier & closure ------------------------------------------------
    def _on_sync(self, src: ProcessId, p: m.Sync) -> None:
        self.sync_count += 1
        if self.sync_count == self.num_clients:
            self.sync_count = 0
            self.sync_epoch += 1
            ack = m.SyncAck(self.rank, self.sync_epoch)
            if self.fabric.tracing:
                self.fabric.events.append(("sync_ack", self.pid, self.sync_epoch, self.clock))
            for pid in self.fabric.processes():
                if pid.kind is Kind.CLIENT:
                    self._send(pid, Tag.SYNC_ACK, ack)

    def _on_close(self, src: ProcessId, p: m.Close) -> None:
        if p.client in self.closed:
            raise ProtocolError(f"duplicate closure from client {p.client}")
        self.closed.add(p.client)
        if len(self.closed) == self.num_clients:
            self.terminated = True
            self.prefetch_queue.clear()
            self.stats.counters["execution_ticks"] = self.clock

    def report(self) -> StatsRecord:
        """Server statistics as emitted at closure."""
        return self.stats.snapshot()
