from systems.asset_manager import AssetManager
from systems.debug_system import DebugSystem
from systems.event_system import EventSystem, SimEvent
from systems.worker_pool import WorkerPool

__all__ = ["AssetManager", "DebugSystem", "EventSystem", "SimEvent", "WorkerPool"]
