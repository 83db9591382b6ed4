"""Binary tree construction followed by random searches."""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from .common import GroupParams, check_fill

KEY = "<q"
LEFT, RIGHT = 0, 1


@dataclass
class BTreeConfig:
    num_inserts: int = 10_000
    num_searches: int = 50_000
    key_range: int = 1 << 20
    object_fill: int = 0
    group: GroupParams = field(default_factory=GroupParams)
    seed: int = 0
    hit_fraction: float = 0.5


def make_keys(cfg: BTreeConfig) -> tuple[list[int], list[int]]:
    rng = random.Random(cfg.seed)
    inserts = [rng.randrange(cfg.key_range) for _ in range(cfg.num_inserts)]
    searches = []
    for _ in range(cfg.num_searches):
        if inserts and rng.random() < cfg.hit_fraction:
            searches.append(inserts[rng.randrange(len(inserts))])
        else:
            searches.append(rng.randrange(cfg.key_range))
    return inserts, searches


def checksum(outcomes) -> str:
    h = hashlib.sha256()
    for hit, depth in outcomes:
        h.update(f"{int(hit)}:{depth};".encode())
    return h.hexdigest()


def program(cfg: BTreeConfig):
    fill = check_fill(cfg.object_fill)
    inserts, searches = make_keys(cfg)

    def run(api):
        api.phase("create")
        g = cfg.group.create(api)
        root = None
        nodes = 0
        for k in inserts:
            if root is None:
                root = api.create_object(g, 8 + fill, 2)
                api.pack(root, KEY, 0, k)
                nodes += 1
                continue
            node = root
            while True:
                nk, = api.unpack(node, KEY)
                if k == nk:
                    break
                side = LEFT if k < nk else RIGHT
                child = api.read_ref(api.index(node, side))
                if child.is_null:
                    new = api.create_object(g, 8 + fill, 2)
                    api.pack(new, KEY, 0, k)
                    api.assign(api.index(node, side), new)
                    nodes += 1
                    break
                node = child
        api.phase("search")
        outcomes = []
        for k in searches:
            node, depth, hit = root, 0, False
            while node is not None and not node.is_null:
                depth += 1
                nk, = api.unpack(node, KEY)
                if nk == k:
                    hit = True
                    break
                node = api.read_ref(api.index(node, LEFT if k < nk else RIGHT))
            outcomes.append((hit, depth))
        return {"checksum": checksum(outcomes), "nodes": nodes, "hits": sum(h for h, _ in outcomes)}

    return run
