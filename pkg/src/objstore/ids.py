"""Identifier encodings, group descriptors and server placement.

Bit layout of an encoded object identifier (64-bit word)::

    bits 63..48  group id
    bits 47..32  segment id
    bits 31..0   unique object id (bit 0 always set)

Bit 0 of a reference word therefore tells an unswizzled reference (an OID,
bit 0 = 1) apart from a swizzled one (a ROT handle, bit 0 = 0).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

NULL_GID = 0xFFFF
NULL_SID = 0xFFFF
NULL_ID = 0b11

MAX_GID = NULL_GID - 1
MAX_SID = NULL_SID - 1
UNIQUE_MASK = 0xFFFF_FFFF


class MalformedOid(ValueError):
    pass


class CapacityError(RuntimeError):
    """An identifier stream ran out of values."""


class MovementContext(enum.IntEnum):
    SINGLE = 0
    SEGMENT = 1


@dataclass(frozen=True, order=True)
class Location:
    group: int
    segment: int

    def encode(self) -> int:
        return ((self.group & 0xFFFF) << 16) | (self.segment & 0xFFFF)

    @classmethod
    def decode(cls, word: int) -> "Location":
        return cls((word >> 16) & 0xFFFF, word & 0xFFFF)

    def __str__(self) -> str:
        return f"{self.group}:{self.segment}"


@dataclass(frozen=True, order=True)
class ObjectId:
    group: int
    segment: int
    unique: int

    @property
    def location(self) -> Location:
        return Location(self.group, self.segment)

    @property
    def is_null(self) -> bool:
        return self == NULL_OID

    def encode(self) -> int:
        return encode_oid(self)

    def hex(self) -> str:
        return f"{encode_oid(self):016x}"

    def __str__(self) -> str:
        if self.is_null:
            return "NULL_OID"
        return f"{self.group}:{self.segment}:{self.unique}"


NULL_OID = ObjectId(NULL_GID, NULL_SID, NULL_ID)


def encode_oid(oid: ObjectId) -> int:
    if not oid.unique & 1:
        raise MalformedOid(f"unique id {oid.unique:#x} has low bit clear")
    loc = ((oid.group & 0xFFFF) << 16) | (oid.segment & 0xFFFF)
    return (loc << 32) | (oid.unique & UNIQUE_MASK)


def decode_oid(word: int) -> ObjectId:
    if not word & 1:
        raise MalformedOid(f"word {word:#018x} is not an unswizzled OID")
    unique = word & UNIQUE_MASK
    loc = (word >> 32) & UNIQUE_MASK
    return ObjectId((loc >> 16) & 0xFFFF, loc & 0xFFFF, unique)


NULL_OID_WORD = encode_oid(NULL_OID)


@dataclass(frozen=True)
class GroupDescriptor:
    gid: int
    base_server: int
    width: int
    prefetch_depth: int
    context: MovementContext

    def servers(self, num_servers: int) -> list[int]:
        return [(self.base_server + k) % num_servers for k in range(self.width)]


def server_rank(seg_id: int, group: GroupDescriptor, num_servers: int) -> int:
    """Map a segment of ``group`` onto the rank of the server that owns it."""
    if num_servers < 1:
        raise ValueError("need at least one server")
    if not 1 <= group.width <= num_servers:
        raise ValueError(f"group width {group.width} outside [1, {num_servers}]")
    if seg_id == NULL_SID:
        raise ValueError("NULL_SID has no server")
    return ((seg_id % group.width) + group.base_server) % num_servers


def rank_bits(num_servers: int) -> int:
    return max(0, (num_servers - 1).bit_length())


class UniqueIdStream:
    """Per-server stream of unique object ids.

    The server rank is interleaved just above the tag bit, so streams of
    different servers can never collide: ``(counter << (1+rb)) | (rank << 1) | 1``.
    """

    def __init__(self, rank: int, num_servers: int):
        if not 0 <= rank < num_servers:
            raise ValueError("rank out of range")
        self.rank = rank
        self.bits = rank_bits(num_servers)
        self.counter = 1
        self.last = 0

    def next(self) -> int:
        while True:
            uid = (self.counter << (1 + self.bits)) | (self.rank << 1) | 1
            if uid > UNIQUE_MASK:
                raise CapacityError(f"server {self.rank} exhausted unique ids")
            self.counter += 1
            if uid != NULL_ID:
                self.last = uid
                return uid


def next_segment_id(previous: int | None, own_rank: int, group: GroupDescriptor,
                    num_servers: int) -> int:
    """Next segment id this server may issue for ``group``.

    Ids are ``offset, offset+width, ...`` where ``offset`` is the server's
    distance from the group's base, so every id maps back to its creator.
    """
    offset = (own_rank - group.base_server) % num_servers
    if offset >= group.width:
        raise ValueError(f"server {own_rank} is not responsible for group {group.gid}")
    sid = offset if previous is None else previous + group.width
    if sid > MAX_SID:
        raise CapacityError(f"segment ids exhausted for group {group.gid}")
    return sid
