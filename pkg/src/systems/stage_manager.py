from enum import Enum, auto
from typing import Callable, Dict, List, Optional

from systems.event_system import EventSystem, SimEvent


class Stage(Enum):
    IDLE = auto()
    VALIDATE = auto()
    MESH = auto()
    REFINE = auto()
    SPACE = auto()
    OPERATORS = auto()
    GROUND_STATE = auto()
    PROPAGATION = auto()
    SPECTRUM = auto()
    DONE = auto()

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


class StageManager:
    def __init__(self):
        self.current_stage = Stage.IDLE
        self.previous_stage: Optional[Stage] = None
        self.subscribers: Dict[Stage, List[Callable]] = {stage: [] for stage in Stage}
        self.event_system = EventSystem()

    def set_stage(self, new_stage: Stage):
        """Change the current pipeline stage"""
        if new_stage != self.current_stage:
            self.previous_stage = self.current_stage
            self.current_stage = new_stage

            payload = {"new_stage": new_stage, "previous_stage": self.previous_stage}
            for callback in self.subscribers[new_stage]:
                callback(payload)
            self.event_system.emit(SimEvent.STAGE_CHANGED, **payload)

    def subscribe(self, stage: Stage, callback: Callable):
        """Subscribe to entering a stage"""
        self.subscribers[stage].append(callback)

    def unsubscribe(self, stage: Stage, callback: Callable):
        """Unsubscribe from a stage"""
        if callback in self.subscribers[stage]:
            self.subscribers[stage].remove(callback)

    def get_stage(self) -> Stage:
        """Get the current stage"""
        return self.current_stage
