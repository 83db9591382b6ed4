"""Barnes-Hut oct-tree N-body simulation, serial or shared-tree parallel.

Serial: every client builds and simulates its own tree.  Parallel: client 0
builds the tree and particle list, then all clients take contiguous slices
of the (active) particle list, accumulate forces by guarded tree walks,
synchronise, update their particles, and synchronise again.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..api import NULL_REF
from .common import GroupParams, block_range, check_fill, digest_floats, initial_particles

NODE = "<8dqq"     # cx cy cz half mass comx comy comz | particle index (-1: none) | child mask
NODE_BYTES = 80
PARTICLE = "<10d"  # x y z vx vy vz m ax ay az
PARTICLE_BYTES = 80
PSLOT = 8          # reference slot of a leaf's particle
MIN_HALF = 1e-12


@dataclass
class OctTreeConfig:
    num_particles: int = 600
    time_steps: int = 2
    theta: float = 0.5
    object_fill: int = 0
    parallel: bool = False
    active_particles: int | None = None
    group: GroupParams = field(default_factory=GroupParams)
    seed: int = 0
    grav_const: float = 1.0
    softening: float = 0.05
    dt: float = 0.001


def octant(px, py, pz, cx, cy, cz) -> int:
    return (px >= cx) | ((py >= cy) << 1) | ((pz >= cz) << 2)


def child_center(cx, cy, cz, half, k):
    q = half / 2
    return (cx + (q if k & 1 else -q), cy + (q if k & 2 else -q), cz + (q if k & 4 else -q))


class _Tree:
    """Tree operations over one client's store handle."""

    def __init__(self, api, cfg: OctTreeConfig, group: int, guarded: bool):
        self.api = api
        self.cfg = cfg
        self.g = group
        self.fill = cfg.object_fill
        self.guarded = guarded

    def new_node(self, cx, cy, cz, half):
        api = self.api
        node = api.create_object(self.g, NODE_BYTES + self.fill, 9)
        api.pack(node, NODE, 0, cx, cy, cz, half, 0.0, 0.0, 0.0, 0.0, -1, 0)
        return node

    def build(self, plist, n: int):
        api = self.api
        bodies = [api.unpack(api.read_ref(api.index(plist, i)), "<7d") for i in range(n)]
        lo = min(min(b[:3]) for b in bodies)
        hi = max(max(b[:3]) for b in bodies)
        half = max(abs(lo), abs(hi)) * 1.0001 + 1e-9
        root = self.new_node(0.0, 0.0, 0.0, half)
        for i, b in enumerate(bodies):
            self.insert(root, plist, i, b[:3], b[6])
        return root

    def insert(self, root, plist, i, p, mp):
        """Add particle ``i`` at ``p``, keeping masses and centres current on the way."""
        api = self.api
        px, py, pz = p
        node, parent, slot = root, None, 0
        while True:
            cx, cy, cz, half, m, mx, my, mz, pidx, mask = api.unpack(node, NODE)
            if mask:
                k = octant(px, py, pz, cx, cy, cz)
                mt = m + mp
                api.pack(node, "<4d", 32, mt, (m * mx + mp * px) / mt,
                         (m * my + mp * py) / mt, (m * mz + mp * pz) / mt)
                api.pack(node, "<q", 72, mask | 1 << k)
                parent, slot = node, k
                node = api.read_ref(api.index(node, k))
                continue
            if pidx < 0:
                # an empty leaf holds the particle's own mass and position exactly
                api.pack(node, "<4dq", 32, mp, px, py, pz, i)
                api.assign(api.index(node, PSLOT), api.read_ref(api.index(plist, i)))
                return
            if half < MIN_HALF:
                raise ValueError("coincident particles cannot be separated")
            node = self.split(node, parent, slot, (cx, cy, cz, half, m, mx, my, mz, pidx))

    def split(self, leaf, parent, slot, vals):
        """Turn an occupied leaf into an inner node with eight children.

        Below the root the leaf object itself moves down into the octant of
        its particle and a fresh inner node takes its place in ``parent``.
        Returns the inner node, which still has to absorb the new particle.
        """
        api = self.api
        cx, cy, cz, half, m, mx, my, mz, pidx = vals
        ko = octant(mx, my, mz, cx, cy, cz)
        if parent is None:
            inner = leaf
            other = api.read_ref(api.index(leaf, PSLOT))
            api.assign(api.index(inner, PSLOT), NULL_REF)
            api.pack(inner, "<q", 64, -1)
        else:
            inner = self.new_node(cx, cy, cz, half)
            api.pack(inner, "<4d", 32, m, mx, my, mz)
        api.pack(inner, "<q", 72, 1 << ko)
        for k in range(8):
            if k == ko and parent is not None:
                api.pack(leaf, "<4d", 0, *child_center(cx, cy, cz, half, k), half / 2)
                api.assign(api.index(inner, k), leaf)
                continue
            c = self.new_node(*child_center(cx, cy, cz, half, k), half / 2)
            if k == ko:
                # the root stays put, so its particle moves to a new child
                api.pack(c, "<4dq", 32, m, mx, my, mz, pidx)
                api.assign(api.index(c, PSLOT), other)
            api.assign(api.index(inner, k), c)
        if parent is not None:
            api.assign(api.index(parent, slot), inner)
        return inner

    def accel(self, root, i, px, py, pz) -> tuple[float, float, float]:
        cfg = self.cfg
        eps2 = cfg.softening ** 2
        theta = cfg.theta
        api = self.api
        acc = [0.0, 0.0, 0.0]

        def walk(node):
            if self.guarded:
                api.wait(node)
            _, _, _, half, m, mx, my, mz, pidx, mask = api.unpack(node, NODE)
            children = None
            if m != 0.0:
                dx, dy, dz = mx - px, my - py, mz - pz
                r2 = dx * dx + dy * dy + dz * dz
                if not mask or 2 * half < theta * math.sqrt(r2):
                    if not (not mask and pidx == i):
                        r2 += eps2
                        s = m / (r2 * math.sqrt(r2))
                        acc[0] += dx * s
                        acc[1] += dy * s
                        acc[2] += dz * s
                else:
                    # empty octants are never visited
                    children = [api.read_ref(api.index(node, k))
                                for k in range(8) if mask >> k & 1]
            if self.guarded:
                api.signal(node)
            if children:
                for c in children:
                    walk(c)

        walk(root)
        G = cfg.grav_const
        return G * acc[0], G * acc[1], G * acc[2]


def program(cfg: OctTreeConfig):
    fill = check_fill(cfg.object_fill)
    init = initial_particles(cfg.num_particles, cfg.seed)
    n = cfg.num_particles
    active = n if cfg.active_particles is None else min(cfg.active_particles, n)
    dt = cfg.dt

    def make_particles(api, g):
        plist = api.create_object(g, 0, n)
        for i, p in enumerate(init):
            obj = api.create_object(g, PARTICLE_BYTES + fill, 0)
            api.pack(obj, PARTICLE, 0, *p, 0.0, 0.0, 0.0)
            api.assign(api.index(plist, i), obj)
        return plist

    def force_pass(tree, root, plist, lo, hi):
        api = tree.api
        for i in range(lo, hi):
            p = api.read_ref(api.index(plist, i))
            x, y, z = api.unpack(p, "<3d")
            a = tree.accel(root, i, x, y, z)
            api.pack(p, "<3d", 56, *a)

    def update_pass(api, plist, lo, hi):
        for i in range(lo, hi):
            p = api.read_ref(api.index(plist, i))
            x, y, z, vx, vy, vz, m, ax, ay, az = api.unpack(p, PARTICLE)
            vx, vy, vz = vx + ax * dt, vy + ay * dt, vz + az * dt
            api.pack(p, "<6d", 0, x + vx * dt, y + vy * dt, z + vz * dt, vx, vy, vz)

    def final_state(api, plist):
        rows = [api.unpack(api.read_ref(api.index(plist, i)), PARTICLE) for i in range(n)]
        state = [r[:6] for r in rows]
        # accelerations from the last force pass (zero for inactive particles)
        return {"digest": digest_floats(c for p in state for c in p), "particles": state,
                "accelerations": [r[7:] for r in rows]}

    def serial(api):
        api.phase("create")
        g = cfg.group.create(api)
        plist = make_particles(api, g)
        tree = _Tree(api, cfg, g, guarded=False)
        for _ in range(cfg.time_steps):
            api.phase("build")
            root = tree.build(plist, n)
            api.phase("simulate")
            force_pass(tree, root, plist, 0, active)
            update_pass(api, plist, 0, active)
            del root
        return final_state(api, plist)

    def parallel(api):
        me = api.identity
        k = api.num_clients
        api.phase("create")
        if me == 0:
            g = cfg.group.create(api)
            plist = make_particles(api, g)
            api.name_object("octree.list", plist)
            api.dump()
        api.synchronise()
        if me != 0:
            plist = api.object_named("octree.list")
            g = None
        tree = _Tree(api, cfg, g, guarded=True)
        lo, hi = block_range(active, k, me)
        for step in range(cfg.time_steps):
            api.phase("build")
            if me == 0:
                tree.guarded = False
                root = tree.build(plist, n)
                tree.guarded = True
                api.name_object(f"octree.root.{step}", root)
                api.dump()
            api.synchronise()
            root = api.object_named(f"octree.root.{step}")
            api.phase("simulate")
            force_pass(tree, root, plist, lo, hi)
            api.synchronise()
            update_pass(api, plist, lo, hi)
            api.dump()
            api.synchronise()
            del root
        if me != 0:
            return None
        return final_state(api, plist)

    return parallel if cfg.parallel else serial
