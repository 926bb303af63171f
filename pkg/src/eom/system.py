import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from ci.determinants import DeterminantSpace
from ci.integrals import OrbitalIntegrals, integrals
from eom.wavefunction import orbital_overlap
from fem.operators import (
    MassSolver,
    OneBodyOperators,
    SparseOperator,
    mass_matrix,
    mass_solver,
    position_operators,
)
from fem.space import FeSpace
from field.pulse import Pulse
from meanfield.table import Interaction, MeanFieldTable, build_table

logger = logging.getLogger(__name__)


@dataclass
class ElectronicSystem:
    """Everything the equations of motion need that does not change in time"""

    space: FeSpace
    operators: OneBodyOperators
    determinants: DeterminantSpace
    interaction: Interaction
    pulse: Optional[Pulse] = None
    mass_rtol: float = 1e-12
    poisson_rtol: float = 1e-10
    mass: SparseOperator = field(init=False)
    solver: MassSolver = field(init=False)
    positions: List[SparseOperator] = field(init=False)

    def __post_init__(self):
        self.interaction.check_dimension(self.space.dimension)
        if self.pulse is not None and self.pulse.dimension != self.space.dimension:
            raise ValueError(
                f"Pulse polarization is {self.pulse.dimension}-dimensional, space is {self.space.dimension}-dimensional"
            )
        self.mass = mass_matrix(self.space)
        self.solver = mass_solver(self.space, self.mass_rtol)
        self.positions = position_operators(self.space)

    @property
    def n_free(self) -> int:
        return self.space.n_free

    @property
    def n_orbitals(self) -> int:
        return self.determinants.n_orbitals

    def vector_potential(self, t: float) -> np.ndarray:
        if self.pulse is None:
            return np.zeros(self.space.dimension)
        return np.asarray(self.pulse.vector_potential(t), dtype=float)

    def h1(self, t: float) -> sp.csr_matrix:
        """T + V - i A(t).Dgrad"""
        return self.operators.h1(self.vector_potential(t))

    def overlap(self, orbitals: np.ndarray) -> np.ndarray:
        return orbital_overlap(orbitals, self.mass.matrix)

    def mean_fields(self, orbitals: np.ndarray) -> MeanFieldTable:
        return build_table(self.space, orbitals, self.interaction, self.poisson_rtol)

    def integrals(self, orbitals: np.ndarray, t: float, table: Optional[MeanFieldTable] = None) -> OrbitalIntegrals:
        table = table if table is not None else self.mean_fields(orbitals)
        return integrals(self.space, orbitals, table, self.operators, self.vector_potential(t))
