import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from fem.space import FeSpace
from meanfield.poisson import CHUNK, poisson_solver, significant_nodes
from systems.worker_pool import WorkerPool

logger = logging.getLogger(__name__)

INTERACTION_KINDS = ("coulomb", "soft_core")


@dataclass(frozen=True)
class Interaction:
    """Electron-electron kernel: bare Coulomb (3D, Poisson) or soft-core (direct)"""

    kind: str = "coulomb"
    softening: float = 0.0

    def __post_init__(self):
        if self.kind not in INTERACTION_KINDS:
            raise ValueError(f"Unknown interaction {self.kind!r}; expected one of {INTERACTION_KINDS}")
        if self.softening < 0:
            raise ValueError("Interaction softening must be non-negative")
        if self.kind == "soft_core" and self.softening == 0:
            raise ValueError("Soft-core interaction needs a positive softening")

    def check_dimension(self, dimension: int) -> None:
        if self.kind == "coulomb" and dimension != 3:
            raise ValueError("The Poisson (coulomb) interaction needs a 3D box; use soft_core below 3D")

    def kernel(self, distance: np.ndarray) -> np.ndarray:
        if self.kind == "soft_core":
            return 1.0 / np.sqrt(distance**2 + self.softening)
        with np.errstate(divide="ignore"):
            return np.where(distance > 0, 1.0 / distance, 0.0)


@dataclass
class MeanFieldTable:
    """Nodal mean fields W^r_s at every global node, values[r, s, node]"""

    values: np.ndarray
    solves: int = 0

    @property
    def n_orbitals(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, rs: Tuple[int, int]) -> np.ndarray:
        return self.values[rs]

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.values - np.conj(self.values.transpose(1, 0, 2)))))


def upper_pairs(n_orbitals: int) -> List[Tuple[int, int]]:
    return [(r, s) for r in range(n_orbitals) for s in range(r, n_orbitals)]


def soft_core_potentials(space: FeSpace, densities: np.ndarray, interaction: Interaction) -> np.ndarray:
    """W_k(x) = sum_x' w' rho_k(x') / sqrt(|x - x'|^2 + eps) at every node"""
    densities = np.atleast_2d(densities)
    weighted = densities * space.node_weights[None, :]
    support = significant_nodes(weighted)
    out = np.zeros(densities.shape, dtype=np.result_type(densities, float))
    if len(support) == 0:
        return out
    sources = space.node_coords[support]
    for start in range(0, space.n_dofs, CHUNK):
        kernel = interaction.kernel(cdist(space.node_coords[start:start + CHUNK], sources))
        out[:, start:start + CHUNK] = (kernel @ weighted[:, support].T).T
    return out


def build_table(
    space: FeSpace,
    orbitals: np.ndarray,
    interaction: Optional[Interaction] = None,
    rtol: float = 1e-10,
) -> MeanFieldTable:
    """Mean fields of every orbital pair; only r <= s are computed"""
    interaction = interaction or Interaction()
    orbitals = np.atleast_2d(orbitals)
    n = orbitals.shape[0]
    if n < 1:
        raise ValueError("build_table needs at least one orbital")
    nodal = space.nodal(orbitals)
    pairs = upper_pairs(n)
    densities = np.array([np.conj(nodal[r]) * nodal[s] for r, s in pairs])

    if interaction.kind == "soft_core":
        potentials = soft_core_potentials(space, densities, interaction)
    else:
        solver = poisson_solver(space, rtol)
        dirichlet = solver.dirichlet(densities)

        def solve(k: int) -> np.ndarray:
            return solver.nodal(solver.solve(densities[k], dirichlet[k]))

        potentials = np.array(WorkerPool().map_ordered(solve, range(len(pairs))))

    values = np.zeros((n, n, space.n_dofs), dtype=complex)
    for k, (r, s) in enumerate(pairs):
        values[r, s] = potentials[k]
        values[s, r] = np.conj(potentials[k])
    logger.debug("Mean-field table: %d orbitals, %d %s evaluations", n, len(pairs), interaction.kind)
    return MeanFieldTable(values=values, solves=len(pairs))
