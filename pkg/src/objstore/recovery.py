"""Space recovery policy: how much to free and in which order."""
from __future__ import annotations

import enum
from typing import Callable, Hashable, Iterable, TypeVar

T = TypeVar("T", bound=Hashable)


class Strategy(enum.Enum):
    DUMP = "DUMP"
    SIMPLE_LRU = "SIMPLE_LRU"
    CLASSIFIED = "CLASSIFIED"


def target_bytes(requested: int, capacity: int, k: float = 15,
                 hi: float = 0.25, lo: float = 0.125) -> int:
    """Bytes a recovery triggered by ``requested`` bytes should free.

    Small requests are scaled up by ``k`` and clamped into ``[lo*T, hi*T]``;
    large ones are returned unchanged.
    """
    if requested < 0:
        raise ValueError("negative request")
    scaled = min(capacity * hi, max(capacity * lo, k * requested))
    return int(max(requested, scaled))


# (has_refs, dirty, is_segment) -> class number, 1 discarded first
CLASS_OF = {
    (False, False, True): 1,
    (False, False, False): 2,
    (False, True, True): 3,
    (False, True, False): 4,
    (True, False, False): 5,
    (True, False, True): 6,
    (True, True, False): 7,
    (True, True, True): 8,
}


def classify(units_mru: Iterable[T], key: Callable[[T], tuple[bool, bool, bool] | None]
             ) -> list[list[T]]:
    """Bucket recovery units into the eight classes.

    ``units_mru`` yields units most recently used first, possibly repeating a
    unit (a segment shows up once per resident object); only the first,
    most recent, occurrence counts.  ``key`` returns None for exempt units.
    Each class list comes back ordered LRU first.
    """
    classes: list[list[T]] = [[] for _ in range(8)]
    seen: set = set()
    for unit in units_mru:
        if unit in seen:
            continue
        seen.add(unit)
        k = key(unit)
        if k is None:
            continue
        classes[CLASS_OF[k] - 1].append(unit)
    for c in classes:
        c.reverse()
    return classes
