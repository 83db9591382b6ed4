"""Reference computations that never touch the object store.

These are written independently of the workload programs (numpy where it
helps) so the store-backed runs can be checked against them.
"""
from __future__ import annotations

import numpy as np

from .btree import BTreeConfig, checksum, make_keys
from .common import initial_particles
from .pluck import PluckConfig, initial_shape


def btree_outcomes(cfg: BTreeConfig) -> list[tuple[bool, int]]:
    inserts, searches = make_keys(cfg)
    tree: dict[int, list] = {}
    root = None
    for k in inserts:
        if root is None:
            root = k
            tree[k] = [None, None]
            continue
        node = root
        while node != k:
            side = 0 if k < node else 1
            nxt = tree[node][side]
            if nxt is None:
                tree[node][side] = k
                tree[k] = [None, None]
                break
            node = nxt
    out = []
    for k in searches:
        node, depth = root, 0
        hit = False
        while node is not None:
            depth += 1
            if node == k:
                hit = True
                break
            node = tree[node][0 if k < node else 1]
        out.append((hit, depth))
    return out


def btree_checksum(cfg: BTreeConfig) -> str:
    return checksum(btree_outcomes(cfg))


def direct_accelerations(pos: np.ndarray, mass: np.ndarray, G: float, softening: float
                         ) -> np.ndarray:
    """Softened direct-sum accelerations, shape (n, 3)."""
    d = pos[None, :, :] - pos[:, None, :]
    r2 = (d ** 2).sum(axis=2) + softening ** 2
    inv = mass[None, :] / (r2 * np.sqrt(r2))
    np.fill_diagonal(inv, 0.0)
    return G * (d * inv[:, :, None]).sum(axis=1)


def _arrays(n: int, seed: int):
    p = np.array(initial_particles(n, seed), dtype=float)
    return p[:, 0:3].copy(), p[:, 3:6].copy(), p[:, 6].copy()


def nbody_direct(n: int, steps: int, seed: int, G: float, softening: float, dt: float,
                 active: int | None = None) -> np.ndarray:
    """Kick-drift integration with direct forces; returns (n, 6) pos+vel."""
    pos, vel, mass = _arrays(n, seed)
    act = n if active is None else min(active, n)
    for _ in range(steps):
        acc = direct_accelerations(pos, mass, G, softening)
        vel[:act] += acc[:act] * dt
        pos[:act] += vel[:act] * dt
    return np.hstack([pos, vel])


def momentum(state: np.ndarray, mass: np.ndarray) -> np.ndarray:
    return (state[:, 3:6] * mass[:, None]).sum(axis=0)


def pluck_reference(cfg: PluckConfig) -> list[float]:
    """Sequential two-array simulation of the string."""
    c = cfg.coupling
    prev = list(initial_shape(cfg))   # x(t)
    older = list(prev)                # x(t-1)
    n = cfg.num_points
    for _ in range(cfg.time_steps):
        new = list(older)
        for i in range(1, n - 1):
            new[i] = 2.0 * prev[i] - older[i] + c * (prev[i - 1] - 2.0 * prev[i] + prev[i + 1])
        older, prev = prev, new
    return prev
