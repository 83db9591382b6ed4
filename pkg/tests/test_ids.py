import pytest
from hypothesis import given, strategies as st

from objstore.ids import (
    NULL_OID,
    NULL_OID_WORD,
    CapacityError,
    GroupDescriptor,
    Location,
    MalformedOid,
    MovementContext,
    ObjectId,
    UniqueIdStream,
    decode_oid,
    encode_oid,
    next_segment_id,
    server_rank,
)

u16 = st.integers(0, 0xFFFF)
odd32 = st.integers(0, 0x7FFF_FFFF).map(lambda v: 2 * v + 1)


def test_null_word():
    assert NULL_OID_WORD == 0xFFFF_FFFF_0000_0003
    assert decode_oid(NULL_OID_WORD) == NULL_OID
    assert NULL_OID.is_null


@given(u16, u16, odd32)
def test_roundtrip(g, s, u):
    oid = ObjectId(g, s, u)
    word = encode_oid(oid)
    # independent packing: group in the top 16 bits, segment next, unique low
    assert word == (g << 48) | (s << 32) | u
    assert decode_oid(word) == oid
    assert word & 1


@given(st.integers(0, 2**64 - 1).filter(lambda w: w % 2 == 0))
def test_even_word_is_not_an_oid(word):
    with pytest.raises(MalformedOid):
        decode_oid(word)


def test_even_unique_rejected():
    with pytest.raises(MalformedOid):
        encode_oid(ObjectId(1, 2, 4))


def test_location_roundtrip():
    loc = Location(7, 300)
    assert Location.decode(loc.encode()) == loc
    assert str(loc) == "7:300"


@given(st.integers(1, 64).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(0, n - 1), st.integers(1, n), st.integers(0, 0xFFFE))))
def test_placement(args):
    n, base, width, seg = args
    g = GroupDescriptor(0, base, width, 0, MovementContext.SINGLE)
    r = server_rank(seg, g, n)
    assert r == ((seg % width) + base) % n
    assert r in g.servers(n)


def test_placement_rejects_bad_width():
    g = GroupDescriptor(0, 0, 5, 0, MovementContext.SINGLE)
    with pytest.raises(ValueError):
        server_rank(0, g, 4)


@given(st.integers(1, 40))
def test_unique_streams_disjoint(n):
    streams = [UniqueIdStream(r, n) for r in range(n)]
    seen = set()
    for s in streams:
        for _ in range(50):
            u = s.next()
            assert u & 1 and u != 0b11
            assert u not in seen
            seen.add(u)


def test_unique_stream_exhausts():
    s = UniqueIdStream(0, 1)
    s.counter = 0x7FFF_FFFF
    s.next()
    with pytest.raises(CapacityError):
        s.next()


@given(st.integers(1, 16).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(0, n - 1), st.integers(1, n))))
def test_segment_ids_map_back_to_creator(args):
    n, base, width = args
    g = GroupDescriptor(3, base, width, 0, MovementContext.SEGMENT)
    issued = set()
    for k in range(width):
        rank = (base + k) % n
        sid = None
        for _ in range(5):
            sid = next_segment_id(sid, rank, g, n)
            assert server_rank(sid, g, n) == rank
            assert sid not in issued
            issued.add(sid)


def test_segment_id_outside_group():
    g = GroupDescriptor(0, 0, 2, 0, MovementContext.SINGLE)
    with pytest.raises(ValueError):
        next_segment_id(None, 3, g, 4)
