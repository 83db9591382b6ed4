"""Naive O(N^2) N-body simulation over two particle groups and their indexes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .common import GroupParams, check_fill, digest_floats, initial_particles

PARTICLE = "<7d"  # x y z vx vy vz m
PARTICLE_BYTES = 56


@dataclass
class N2Config:
    num_particles: int = 1500
    time_steps: int = 1
    object_fill: int = 0
    group: GroupParams = field(default_factory=GroupParams)
    seed: int = 0
    grav_const: float = 1.0
    softening: float = 0.05
    dt: float = 0.001


def program(cfg: N2Config):
    fill = check_fill(cfg.object_fill)
    init = initial_particles(cfg.num_particles, cfg.seed)
    n = cfg.num_particles
    G, eps2, dt = cfg.grav_const, cfg.softening ** 2, cfg.dt

    def run(api):
        api.phase("create")
        ga = cfg.group.create(api)
        gb = cfg.group.create(api)
        index_a = api.create_object(ga, 0, n)
        index_b = api.create_object(gb, 0, n)
        for i, p in enumerate(init):
            for g, idx in ((ga, index_a), (gb, index_b)):
                obj = api.create_object(g, PARTICLE_BYTES + fill, 0)
                api.pack(obj, PARTICLE, 0, *p)
                api.assign(api.index(idx, i), obj)
                del obj
        api.phase("simulate")
        cur, upd = index_a, index_b
        for _ in range(cfg.time_steps):
            for i in range(n):
                xi, yi, zi, vxi, vyi, vzi, mi = api.unpack(api.read_ref(api.index(cur, i)), PARTICLE)
                ax = ay = az = 0.0
                for j in range(n):
                    if j == i:
                        continue
                    xj, yj, zj, _, _, _, mj = api.unpack(api.read_ref(api.index(cur, j)), PARTICLE)
                    dx, dy, dz = xj - xi, yj - yi, zj - zi
                    r2 = dx * dx + dy * dy + dz * dz + eps2
                    s = mj / (r2 * math.sqrt(r2))
                    ax += dx * s
                    ay += dy * s
                    az += dz * s
                vx = vxi + G * ax * dt
                vy = vyi + G * ay * dt
                vz = vzi + G * az * dt
                # written once per step, so no swizzled slot is kept for it
                out = api.copy_ref(api.index(upd, i))
                api.pack(out, PARTICLE, 0, xi + vx * dt, yi + vy * dt, zi + vz * dt, vx, vy, vz, mi)
            cur, upd = upd, cur
        final = [api.unpack(api.read_ref(api.index(cur, i)), PARTICLE) for i in range(n)]
        return {"digest": digest_floats(c for p in final for c in p[:6]),
                "particles": final}

    return run
