from enum import Enum, auto


class CellRegion(Enum):
    INTERIOR = auto()
    BOUNDARY = auto()
    ABSORBING = auto()

    @property
    def code(self) -> int:
        """Integer tag used in VTK cell data"""
        return self.value - 1
