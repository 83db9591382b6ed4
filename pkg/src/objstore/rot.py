"""Resident object table.

One entry per object the client knows about.  The entries form a red-black
tree keyed on the unique part of the OID and, at the same time, a doubly
linked list in MRU to LRU order.  Every lookup through the table moves the
entry to the MRU end.
"""
from __future__ import annotations

import itertools
from typing import Iterator

from .ids import ObjectId

RED, BLACK = True, False


class RotEntry:
    __slots__ = ("oid", "dirty", "protected", "ref_count", "segment", "wrapper",
                 "unused_prefetch", "handle",
                 "left", "right", "parent", "color", "prev", "next")

    def __init__(self, oid: ObjectId | None, handle: int = 0):
        self.oid = oid
        self.dirty = False
        self.protected = 0  # nesting count: nonzero means protected
        self.ref_count = 0
        self.segment = None
        self.wrapper = None
        self.unused_prefetch = False
        self.handle = handle
        self.left = self.right = self.parent = None
        self.color = BLACK
        self.prev = self.next = None

    @property
    def key(self) -> int:
        return self.oid.unique

    @property
    def resident(self) -> bool:
        return self.wrapper is not None

    @property
    def deletable(self) -> bool:
        return self.wrapper is None and self.ref_count == 0 and not self.protected

    def __repr__(self) -> str:
        flags = "".join(c for c, on in (("D", self.dirty), ("P", self.protected),
                                        ("R", self.wrapper is not None)) if on)
        return f"RotEntry({self.oid} rc={self.ref_count} {flags})"


class ResidentObjectTable:
    def __init__(self):
        nil = RotEntry(None)
        nil.left = nil.right = nil.parent = nil
        self.nil = nil
        self.root = nil
        self.head: RotEntry | None = None  # MRU
        self.tail: RotEntry | None = None  # LRU
        self.size = 0
        self._handles = itertools.count(1)
        self.by_handle: dict[int, RotEntry] = {}

    def __len__(self) -> int:
        return self.size

    # -- search -----------------------------------------------------------
    def search(self, oid: ObjectId, touch: bool = True) -> RotEntry | None:
        key = oid.unique
        x = self.root
        nil = self.nil
        while x is not nil:
            if key == x.oid.unique:
                if touch:
                    self.touch(x)
                return x
            x = x.left if key < x.oid.unique else x.right
        return None

    def insert(self, oid: ObjectId) -> RotEntry:
        """Add a fresh entry at the MRU end; the oid must be absent."""
        z = RotEntry(oid, next(self._handles) << 1)
        nil = self.nil
        z.left = z.right = nil
        y, x = nil, self.root
        while x is not nil:
            y = x
            if oid.unique == x.oid.unique:
                raise KeyError(f"{oid} already in table")
            x = x.left if oid.unique < x.oid.unique else x.right
        z.parent = y
        if y is nil:
            self.root = z
        elif oid.unique < y.oid.unique:
            y.left = z
        else:
            y.right = z
        z.color = RED
        self._insert_fixup(z)
        self._push_front(z)
        self.size += 1
        self.by_handle[z.handle] = z
        return z

    def remove(self, z: RotEntry) -> None:
        self._tree_delete(z)
        self._unlink(z)
        self.size -= 1
        del self.by_handle[z.handle]
        z.left = z.right = z.parent = None

    # -- list view --------------------------------------------------------
    def touch(self, e: RotEntry) -> None:
        if self.head is e:
            return
        self._unlink(e)
        self._push_front(e)

    def _push_front(self, e: RotEntry) -> None:
        e.prev = None
        e.next = self.head
        if self.head is not None:
            self.head.prev = e
        self.head = e
        if self.tail is None:
            self.tail = e

    def _unlink(self, e: RotEntry) -> None:
        if e.prev is not None:
            e.prev.next = e.next
        else:
            self.head = e.next
        if e.next is not None:
            e.next.prev = e.prev
        else:
            self.tail = e.prev
        e.prev = e.next = None

    def lru(self) -> Iterator[RotEntry]:
        e = self.tail
        while e is not None:
            prev = e.prev
            yield e
            e = prev

    def mru(self) -> Iterator[RotEntry]:
        e = self.head
        while e is not None:
            nxt = e.next
            yield e
            e = nxt

    def in_order(self) -> list[RotEntry]:
        out, stack, x = [], [], self.root
        while stack or x is not self.nil:
            while x is not self.nil:
                stack.append(x)
                x = x.left
            x = stack.pop()
            out.append(x)
            x = x.right
        return out

    # -- red-black machinery ----------------------------------------------
    def _rotate_left(self, x: RotEntry) -> None:
        y = x.right
        x.right = y.left
        if y.left is not self.nil:
            y.left.parent = x
        y.parent = x.parent
        if x.parent is self.nil:
            self.root = y
        elif x is x.parent.left:
            x.parent.left = y
        else:
            x.parent.right = y
        y.left = x
        x.parent = y

    def _rotate_right(self, x: RotEntry) -> None:
        y = x.left
        x.left = y.right
        if y.right is not self.nil:
            y.right.parent = x
        y.parent = x.parent
        if x.parent is self.nil:
            self.root = y
        elif x is x.parent.right:
            x.parent.right = y
        else:
            x.parent.left = y
        y.right = x
        x.parent = y

    def _insert_fixup(self, z: RotEntry) -> None:
        while z.parent.color is RED:
            gp = z.parent.parent
            if z.parent is gp.left:
                y = gp.right
                if y.color is RED:
                    z.parent.color = BLACK
                    y.color = BLACK
                    gp.color = RED
                    z = gp
                else:
                    if z is z.parent.right:
                        z = z.parent
                        self._rotate_left(z)
                    z.parent.color = BLACK
                    z.parent.parent.color = RED
                    self._rotate_right(z.parent.parent)
            else:
                y = gp.left
                if y.color is RED:
                    z.parent.color = BLACK
                    y.color = BLACK
                    gp.color = RED
                    z = gp
                else:
                    if z is z.parent.left:
                        z = z.parent
                        self._rotate_right(z)
                    z.parent.color = BLACK
                    z.parent.parent.color = RED
                    self._rotate_left(z.parent.parent)
        self.root.color = BLACK

    def _transplant(self, u: RotEntry, v: RotEntry) -> None:
        if u.parent is self.nil:
            self.root = v
        elif u is u.parent.left:
            u.parent.left = v
        else:
            u.parent.right = v
        v.parent = u.parent

    def _minimum(self, x: RotEntry) -> RotEntry:
        while x.left is not self.nil:
            x = x.left
        return x

    def _tree_delete(self, z: RotEntry) -> None:
        nil = self.nil
        y = z
        y_color = y.color
        if z.left is nil:
            x = z.right
            self._transplant(z, z.right)
        elif z.right is nil:
            x = z.left
            self._transplant(z, z.left)
        else:
            y = self._minimum(z.right)
            y_color = y.color
            x = y.right
            if y.parent is z:
                x.parent = y
            else:
                self._transplant(y, y.right)
                y.right = z.right
                y.right.parent = y
            self._transplant(z, y)
            y.left = z.left
            y.left.parent = y
            y.color = z.color
        if y_color is BLACK:
            self._delete_fixup(x)
        nil.parent = nil

    def _delete_fixup(self, x: RotEntry) -> None:
        while x is not self.root and x.color is BLACK:
            if x is x.parent.left:
                w = x.parent.right
                if w.color is RED:
                    w.color = BLACK
                    x.parent.color = RED
                    self._rotate_left(x.parent)
                    w = x.parent.right
                if w.left.color is BLACK and w.right.color is BLACK:
                    w.color = RED
                    x = x.parent
                else:
                    if w.right.color is BLACK:
                        w.left.color = BLACK
                        w.color = RED
                        self._rotate_right(w)
                        w = x.parent.right
                    w.color = x.parent.color
                    x.parent.color = BLACK
                    w.right.color = BLACK
                    self._rotate_left(x.parent)
                    x = self.root
            else:
                w = x.parent.left
                if w.color is RED:
                    w.color = BLACK
                    x.parent.color = RED
                    self._rotate_right(x.parent)
                    w = x.parent.left
                if w.right.color is BLACK and w.left.color is BLACK:
                    w.color = RED
                    x = x.parent
                else:
                    if w.left.color is BLACK:
                        w.right.color = BLACK
                        w.color = RED
                        self._rotate_left(w)
                        w = x.parent.left
                    w.color = x.parent.color
                    x.parent.color = BLACK
                    w.left.color = BLACK
                    self._rotate_right(x.parent)
                    x = self.root
        x.color = BLACK

    # -- checks -----------------------------------------------------------
    def depth(self) -> int:
        def walk(x):
            if x is self.nil:
                return 0
            return 1 + max(walk(x.left), walk(x.right))
        return walk(self.root)

    def check(self) -> None:
        """Assert red-black invariants and agreement of the two views."""
        nil = self.nil
        assert nil.color is BLACK
        assert self.root.color is BLACK

        def black_height(x, lo, hi) -> int:
            if x is nil:
                return 1
            k = x.oid.unique
            assert (lo is None or k > lo) and (hi is None or k < hi), "order violated"
            if x.color is RED:
                assert x.left.color is BLACK and x.right.color is BLACK, "red-red"
            for c in (x.left, x.right):
                if c is not nil:
                    assert c.parent is x, "bad parent link"
            bl = black_height(x.left, lo, k)
            br = black_height(x.right, k, hi)
            assert bl == br, "black heights differ"
            return bl + (x.color is BLACK)

        black_height(self.root, None, None)
        tree = self.in_order()
        forward = list(self.mru())
        backward = list(self.lru())
        assert len(tree) == len(forward) == self.size == len(self.by_handle)
        assert backward == forward[::-1]
        assert {id(e) for e in tree} == {id(e) for e in forward}
