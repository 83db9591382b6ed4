import pytest
from hypothesis import given, settings, strategies as st

from objstore.ids import NULL_OID, Location, MovementContext, UniqueIdStream
from objstore.storage import (
    DIR_ENTRY,
    HEADER,
    ObjectTooLarge,
    ProtocolError,
    Segment,
    SegmentImage,
    StorageLayer,
    object_extent,
    segment_footprint,
)


def test_extent_and_footprint():
    assert object_extent(100, 3) == 124
    assert segment_footprint(50_000, 50) == HEADER.size + 50 * DIR_ENTRY.size + 50_000


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 300), st.integers(0, 6)), min_size=1, max_size=30))
def test_bump_allocation(sizes):
    seg = Segment(Location(1, 0), capacity=2000, max_entries=8)
    ids = UniqueIdStream(0, 1)
    top = 0
    for d, r in sizes:
        oid = seg.create_object(d, r, MovementContext.SINGLE, ids)
        if oid == NULL_OID:
            assert object_extent(d, r) > 2000 - top or seg.object_count == 8
            continue
        e = seg.lookup(oid)
        assert e.offset == top
        top += object_extent(d, r)
        # fresh references are all NULL
        assert seg.refs_of(e) == [NULL_OID] * r
    seg.check()
    assert seg.free_bytes == 2000 - top


def test_image_roundtrip():
    seg = Segment(Location(2, 5), capacity=500, max_entries=4)
    ids = UniqueIdStream(1, 3)
    oids = [seg.create_object(40, 2, MovementContext.SEGMENT, ids) for _ in range(3)]
    seg.data[0:4] = b"abcd"
    img = SegmentImage.parse(seg.image())
    assert img.loc == seg.loc and img.ts == seg.ts == 3
    copy = img.to_segment(4)
    copy.check()
    assert bytes(copy.data) == bytes(seg.data)
    assert [e.oid for e in copy.entries] == sorted(oids, key=lambda o: o.unique)


def test_return_object_bumps_timestamp():
    seg = Segment(Location(0, 0), capacity=300)
    oid = seg.create_object(8, 1, MovementContext.SINGLE, UniqueIdStream(0, 1))
    e = seg.lookup(oid)
    raw = bytes(range(8)) + seg.object_bytes(e)[8:]
    seg.return_object(oid, raw)
    assert e.ts == 1
    assert seg.object_bytes(e) == raw
    with pytest.raises(ProtocolError):
        seg.return_object(oid, raw[:-1])


def test_too_large():
    seg = Segment(Location(0, 0), capacity=100)
    with pytest.raises(ObjectTooLarge):
        seg.create_object(90, 2, MovementContext.SINGLE, UniqueIdStream(0, 1))


def test_first_fit_over_segments():
    st_ = StorageLayer(0, 1, segment_bytes=100, directory_entries=4)
    g = st_.create_group(MovementContext.SINGLE, 1, 0).descriptor.gid
    assert st_.create_object(g, 60, 0) == (NULL_OID, None)
    s0 = st_.new_segment(g)
    a, _ = st_.create_object(g, 60, 0)
    assert a.location == s0.loc
    assert st_.create_object(g, 60, 0) == (NULL_OID, None)
    s1 = st_.new_segment(g)
    b, _ = st_.create_object(g, 60, 0)
    c, seg = st_.create_object(g, 30, 0)
    # the small object still fits in the first segment
    assert b.location == s1.loc and seg is s0 and c.location == s0.loc


def test_segment_context_skips_segments_held_elsewhere():
    st_ = StorageLayer(0, 1, segment_bytes=100, directory_entries=4)
    g = st_.create_group(MovementContext.SEGMENT, 1, 0).descriptor.gid
    s0 = st_.new_segment(g)
    s0.accept(1)
    assert st_.create_object(g, 10, 0, client=2) == (NULL_OID, None)
    oid, seg = st_.create_object(g, 10, 0, client=1)
    assert seg is s0


def test_groups_and_names():
    st_ = StorageLayer(0, 4)
    a = st_.create_group(MovementContext.SINGLE, 3, 0).descriptor
    b = st_.create_group(MovementContext.SINGLE, 2, 1).descriptor
    assert (a.base_server, b.base_server) == (0, 3)
    st_.name_object("x", NULL_OID)
    assert st_.object_named("missing") == NULL_OID
    with pytest.raises(ProtocolError):
        StorageLayer(1, 4).create_group(MovementContext.SINGLE, 1, 0)
