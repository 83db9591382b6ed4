"""Message tags and payload records exchanged between clients and servers.

Replica contents travel as raw bytes (object extents or segment images);
the remaining fields are small fixed-size records.  ``nbytes`` gives the
wire size charged by the fabric.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .ids import GroupDescriptor, Location, MovementContext, ObjectId

HEADER_BYTES = 16
OID_BYTES = 8


class Tag(enum.IntEnum):
    CREATE_GROUP = 1
    GROUP_NOTIFY = 2
    CREATE_OBJECT = 3
    CREATE_REPLY = 4
    FETCH = 5
    REPLICA_OBJECT = 6
    REPLICA_SEGMENT = 7
    RETURN_OBJECTS = 8
    RETURN_SEGMENT = 9
    DISCARD_NOTICE = 10
    RECEIPT = 11
    ACCEPT_SEGMENT = 12
    NAME = 13
    NAMED_QUERY = 14
    NAMED_REPLY = 15
    WAIT = 16
    GRANT = 17
    SIGNAL = 18
    SYNC = 19
    SYNC_ACK = 20
    PREFETCH = 21
    CLOSE = 22


@dataclass
class CreateGroup:
    req: int
    context: MovementContext
    width: int
    prefetch_depth: int

    def nbytes(self) -> int:
        return HEADER_BYTES + 16


@dataclass
class GroupNotify:
    descriptor: GroupDescriptor
    requester: int | None = None
    req: int | None = None

    def nbytes(self) -> int:
        return HEADER_BYTES + 16


@dataclass
class CreateObject:
    req: int
    client: int
    gid: int
    data_size: int
    ref_count: int
    hops: int = 0
    returned: bool = False
    nominated: bool = False

    def nbytes(self) -> int:
        return HEADER_BYTES + 24


@dataclass
class CreateReply:
    req: int
    oid: ObjectId | None
    offset: int = 0
    image: bytes | None = None
    error: str | None = None

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES + 8 + (len(self.image) if self.image else 0)


@dataclass
class Fetch:
    client: int
    oid: ObjectId

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES


@dataclass
class ReplicaObject:
    oid: ObjectId
    ts: int
    data_size: int
    ref_count: int
    raw: bytes
    prefetched: bool = False
    fault: bool = False

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES + 12 + len(self.raw)


@dataclass
class ReplicaSegment:
    oid: ObjectId  # the object whose fetch produced this segment
    image: bytes

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES + len(self.image)


@dataclass
class ReturnObjects:
    client: int
    objects: list[tuple[ObjectId, bytes]]

    def nbytes(self) -> int:
        return HEADER_BYTES + sum(OID_BYTES + 4 + len(b) for _, b in self.objects)


@dataclass
class ReturnSegment:
    client: int
    loc: Location
    image: bytes
    dirty: list[ObjectId]
    discard: bool

    def nbytes(self) -> int:
        return HEADER_BYTES + 8 + OID_BYTES * len(self.dirty) + len(self.image)


@dataclass
class SegmentNotice:
    """Payload of DISCARD_NOTICE and ACCEPT_SEGMENT."""
    client: int
    loc: Location

    def nbytes(self) -> int:
        return HEADER_BYTES + 8


@dataclass
class Receipt:
    oids: list[ObjectId] = field(default_factory=list)
    loc: Location | None = None

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES * len(self.oids) + (8 if self.loc else 0)


@dataclass
class Name:
    name: str
    oid: ObjectId

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES + len(self.name.encode()) + 1


@dataclass
class NamedQuery:
    req: int
    client: int
    name: str

    def nbytes(self) -> int:
        return HEADER_BYTES + 8 + len(self.name.encode()) + 1


@dataclass
class NamedReply:
    req: int
    oid: ObjectId

    def nbytes(self) -> int:
        return HEADER_BYTES + 8 + OID_BYTES


@dataclass
class Wait:
    client: int
    oid: ObjectId
    ts: int  # -1 when the client holds no replica

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES + 4


@dataclass
class Grant:
    oid: ObjectId
    replica: ReplicaObject | ReplicaSegment | None = None

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES + (self.replica.nbytes() if self.replica else 0)


@dataclass
class Signal:
    client: int
    oid: ObjectId

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES


@dataclass
class Prefetch:
    client: int
    oid: ObjectId
    depth: int

    def nbytes(self) -> int:
        return HEADER_BYTES + OID_BYTES + 8


@dataclass
class Sync:
    client: int
    epoch: int

    def nbytes(self) -> int:
        return HEADER_BYTES + 8


@dataclass
class SyncAck:
    server: int
    epoch: int

    def nbytes(self) -> int:
        return HEADER_BYTES + 8


@dataclass
class Close:
    client: int

    def nbytes(self) -> int:
        return HEADER_BYTES + 4

