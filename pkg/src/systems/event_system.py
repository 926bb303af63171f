from dataclasses import dataclass
from enum import Enum, auto
from typing import Any, Callable, Dict, List


class SimEvent(Enum):
    # Pipeline Events
    STAGE_CHANGED = auto()
    REFINEMENT_PASS = auto()

    # Propagation Events
    KRYLOV_STEP = auto()
    IMAGINARY_STEP = auto()
    DENSITY_REGULARIZED = auto()

    # Solver Events
    SOLVER_ITERATIONS = auto()

    # Output Events
    OBSERVABLE_RECORDED = auto()
    CHECKPOINT_WRITTEN = auto()


@dataclass
class EventData:
    """Container for event data"""

    event_type: SimEvent
    data: Dict[str, Any]


class EventSystem:
    _instance = None

    def __new__(cls):
        # Singleton pattern
        if cls._instance is None:
            cls._instance = super(EventSystem, cls).__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        # Only initialize once
        if not self._initialized:
            self._handlers: Dict[SimEvent, List[Callable]] = {}
            self._initialized = True

    def subscribe(self, event: SimEvent, handler: Callable) -> None:
        """Subscribe to an event"""
        if event not in self._handlers:
            self._handlers[event] = []
        if handler not in self._handlers[event]:
            self._handlers[event].append(handler)

    def unsubscribe(self, event: SimEvent, handler: Callable) -> None:
        """Unsubscribe from an event"""
        if event in self._handlers and handler in self._handlers[event]:
            self._handlers[event].remove(handler)

    def emit(self, event: SimEvent, **kwargs) -> None:
        """Emit an event with optional data"""
        handlers = self._handlers.get(event)
        if handlers:
            event_data = EventData(event_type=event, data=kwargs)
            for handler in list(handlers):
                handler(event_data)

    def has_subscribers(self, event: SimEvent) -> bool:
        return bool(self._handlers.get(event))
