from typing import Optional


class SimulationError(Exception):
    """Base class for every failure raised by the simulator"""


class ConfigError(SimulationError, ValueError):
    """Invalid or inconsistent run configuration"""


class NonDivisibleExtent(SimulationError, ValueError):
    """Box extent is not an integer multiple of the coarse cell size"""


class BudgetExceeded(SimulationError):
    """Refinement produced more leaves than the configured cap"""


class EcsMisaligned(SimulationError, ValueError):
    """An exterior complex scaling surface cuts through a cell interior"""


class SingularPotential(SimulationError):
    """A quadrature node coincides with a bare Coulomb nucleus"""


class NoConvergence(SimulationError):
    """Iterative solver stopped before reaching its tolerance"""

    def __init__(self, message: str, iterations: Optional[int] = None):
        super().__init__(message)
        self.iterations = iterations


class Overflow(SimulationError):
    """Determinant space larger than the configured cap"""


class SingularDensity(SimulationError):
    """One-body density matrix has no eigenvalue above the inversion cutoff"""


class NonFinite(SimulationError, ArithmeticError):
    """A linear map produced NaN or infinite values"""


class TooFewSamples(SimulationError, ValueError):
    """Not enough time samples to build a spectrum"""


class CheckpointMismatch(SimulationError):
    """Checkpoint was written by a different configuration"""


class StageError(SimulationError):
    """Wraps a failure with the name of the pipeline stage it happened in"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
