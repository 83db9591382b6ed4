"""Helpers shared by the example applications."""
from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..ids import MovementContext


@dataclass(frozen=True)
class GroupParams:
    context: MovementContext = MovementContext.SINGLE
    width: int = 1
    prefetch_depth: int = 0

    def create(self, api) -> int:
        return api.create_group(self.context, self.width, self.prefetch_depth)


def digest_floats(values: Iterable[float]) -> str:
    h = hashlib.sha256()
    for v in values:
        h.update(struct.pack("<d", v))
    return h.hexdigest()


def block_range(n: int, parts: int, which: int) -> tuple[int, int]:
    """Contiguous block ``which`` of ``parts`` over ``range(n)``."""
    base, extra = divmod(n, parts)
    lo = which * base + min(which, extra)
    return lo, lo + base + (1 if which < extra else 0)


def initial_particles(n: int, seed: int) -> list[tuple[float, ...]]:
    """Positions uniform in a unit-radius cube, small velocities, masses ~1/n.

    Returns tuples (x, y, z, vx, vy, vz, m).
    """
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        x, y, z = (rng.uniform(-1.0, 1.0) for _ in range(3))
        vx, vy, vz = (rng.gauss(0.0, 0.05) for _ in range(3))
        m = rng.uniform(0.5, 1.5) / n
        out.append((x, y, z, vx, vy, vz, m))
    return out


def check_fill(fill: int) -> int:
    if fill < 0:
        raise ValueError("object fill must be non-negative")
    return fill


def positions(parts: Sequence[Sequence[float]]) -> list[float]:
    return [c for p in parts for c in p[:3]]
