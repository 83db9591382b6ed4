"""Processing costs, in ticks, charged on top of message transit time."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class PrefetchPriority(enum.Enum):
    HIGH = "HIGH"
    LOW_BFS = "LOW_BFS"
    LOW_DFS = "LOW_DFS"


@dataclass(frozen=True)
class CostModel:
    # servers
    server_message: int = 60
    server_per_byte: float = 0.02
    server_send: int = 20
    # clients
    client_message: int = 60
    client_per_byte: float = 0.02
    client_send: int = 20
    rot_search: int = 4
    access: int = 2
    create_local: int = 20
    recovery_base: int = 200
    recovery_per_item: int = 15

    def server_handling(self, nbytes: int) -> int:
        return self.server_message + math.ceil(self.server_per_byte * nbytes)

    def client_handling(self, nbytes: int) -> int:
        return self.client_message + math.ceil(self.client_per_byte * nbytes)
