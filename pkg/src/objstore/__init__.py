"""Distributed object server running on a simulated message-passing machine."""
from .api import NULL_REF, IndexedRef, ObjectStore, Ref
from .costs import CostModel, PrefetchPriority
from .fabric import DeadlockError, FabricConfig
from .ids import MovementContext, ObjectId
from .lom import CacheStarvation, DanglingReference
from .recovery import Strategy, target_bytes
from .storage import ObjectTooLarge, ProtocolError
from .system import Machine, MachineConfig

__all__ = [
    "NULL_REF", "IndexedRef", "ObjectStore", "Ref", "CostModel", "PrefetchPriority",
    "DeadlockError", "FabricConfig", "MovementContext", "ObjectId", "CacheStarvation",
    "DanglingReference", "Strategy", "target_bytes", "ObjectTooLarge", "ProtocolError",
    "Machine", "MachineConfig",
]
