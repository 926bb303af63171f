import logging
import weakref
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla
from scipy.spatial.distance import cdist

from errors import NoConvergence
from fem.operators import condense, stiffness_nodes
from fem.space import FeSpace
from systems.event_system import EventSystem, SimEvent

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi
# Source nodes closer than this to an evaluation point are skipped
SELF_DISTANCE = 1e-10
# Relative density magnitude that counts as "reaching the boundary"
BOUNDARY_DENSITY_WARN = 1e-8
CHUNK = 2048


def pair_density(space: FeSpace, phi_r: np.ndarray, phi_s: np.ndarray) -> np.ndarray:
    """Nodal values of phi_r^* phi_s at every global node"""
    return np.conj(space.nodal(phi_r)) * space.nodal(phi_s)


def significant_nodes(weighted: np.ndarray, rel_tol: float = 1e-14) -> np.ndarray:
    """Nodes carrying non-negligible weighted density in any of the rows"""
    magnitude = np.max(np.abs(np.atleast_2d(weighted)), axis=0)
    peak = magnitude.max() if magnitude.size else 0.0
    if peak == 0.0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(magnitude > rel_tol * peak)


def coulomb_sum(targets: np.ndarray, sources: np.ndarray, weighted: np.ndarray) -> np.ndarray:
    """sum_j weighted[k, j] / |targets_i - sources_j| for every row k, chunked over targets"""
    weighted = np.atleast_2d(weighted)
    out = np.zeros((weighted.shape[0], len(targets)), dtype=np.result_type(weighted, float))
    if len(sources) == 0:
        return out
    for start in range(0, len(targets), CHUNK):
        dist = cdist(targets[start:start + CHUNK], sources)
        with np.errstate(divide="ignore"):
            inv = np.where(dist < SELF_DISTANCE, 0.0, 1.0 / dist)
        out[:, start:start + CHUNK] = (inv @ weighted.T).T
    return out


def _boundary_values(space: FeSpace, densities: np.ndarray, points: np.ndarray) -> np.ndarray:
    densities = np.atleast_2d(densities)
    weighted = densities * space.node_weights[None, :]
    support = significant_nodes(weighted)
    if len(support) == 0:
        return np.zeros((densities.shape[0], len(points)), dtype=densities.dtype)

    near_wall = np.unique(space.dof_map[space.wall_leaves])
    edge = np.max(np.abs(densities[:, near_wall]), initial=0.0)
    if edge > BOUNDARY_DENSITY_WARN * np.max(np.abs(densities)):
        logger.warning(
            "Pair density reaches the box boundary (|rho| = %.2e); Dirichlet data is approximate", edge
        )
    return coulomb_sum(points, space.node_coords[support], weighted[:, support])


def boundary_dirichlet(space: FeSpace, phi_r: np.ndarray, phi_s: np.ndarray) -> np.ndarray:
    """Direct quadrature of int rho(r') / |r_b - r'| at every boundary master node"""
    masters = space.master_dofs
    points = space.node_coords[masters[space.boundary_mask[masters]]]
    return _boundary_values(space, pair_density(space, phi_r, phi_s), points)[0]


class PoissonSolver:
    """-lap W = 4 pi rho on the master dofs with pinned boundary values.

    The stiffness matrix is assembled once per space on the unscaled
    coordinates; interior unknowns are solved by Jacobi-preconditioned CG.
    """

    def __init__(self, space: FeSpace, rtol: float = 1e-10, max_iter: Optional[int] = None):
        self.space = space
        self.rtol = rtol
        self.max_iter = max_iter
        stiffness = condense(space, stiffness_nodes(space, use_ecs=False), boundary=True)
        masters = space.master_dofs
        on_boundary = space.boundary_mask[masters]
        self.interior = np.flatnonzero(~on_boundary)
        self.boundary = np.flatnonzero(on_boundary)
        self.boundary_points = space.node_coords[masters[self.boundary]]
        self.k_ii = stiffness[self.interior][:, self.interior].tocsr()
        self.k_ib = stiffness[self.interior][:, self.boundary].tocsr()
        diagonal = self.k_ii.diagonal()
        n = len(self.interior)
        self.preconditioner = spla.LinearOperator((n, n), matvec=lambda x: x / diagonal, dtype=float)
        self.last_iterations = 0
        logger.debug("Poisson system: %d interior, %d boundary unknowns", n, len(self.boundary))

    @property
    def n_coefficients(self) -> int:
        return len(self.interior) + len(self.boundary)

    def dirichlet(self, densities: np.ndarray) -> np.ndarray:
        """Boundary values for one density [n_dofs] or a stack [k, n_dofs]"""
        values = _boundary_values(self.space, densities, self.boundary_points)
        return values[0] if np.ndim(densities) == 1 else values

    def solve(self, density: np.ndarray, dirichlet: np.ndarray) -> np.ndarray:
        """Master-dof coefficients of W (boundary entries equal dirichlet)"""
        load = FOUR_PI * self.space.restrict(self.space.node_weights * density, boundary=True)
        rhs = load[self.interior] - self.k_ib @ dirichlet
        if np.iscomplexobj(rhs):
            x = self._cg(rhs.real) + 1j * self._cg(rhs.imag)
        else:
            x = self._cg(rhs)
        result = np.zeros(self.n_coefficients, dtype=np.result_type(x, dirichlet))
        result[self.interior] = x
        result[self.boundary] = dirichlet
        return result

    def nodal(self, coefficients: np.ndarray) -> np.ndarray:
        return self.space.nodal(coefficients, boundary=True)

    def _cg(self, b: np.ndarray) -> np.ndarray:
        if not np.any(b):
            return np.zeros_like(b)
        count = [0]

        def tick(_):
            count[0] += 1

        x, info = spla.cg(
            self.k_ii,
            b,
            rtol=self.rtol,
            atol=0.0,
            maxiter=self.max_iter,
            M=self.preconditioner,
            callback=tick,
        )
        self.last_iterations = count[0]
        if info != 0:
            raise NoConvergence(f"Poisson CG did not converge in {count[0]} iterations", iterations=count[0])
        logger.debug("Poisson solve: %d CG iterations", count[0])
        EventSystem().emit(SimEvent.SOLVER_ITERATIONS, solver="poisson", iterations=count[0])
        return x


_SOLVERS: "weakref.WeakKeyDictionary[FeSpace, PoissonSolver]" = weakref.WeakKeyDictionary()


def poisson_solver(space: FeSpace, rtol: float = 1e-10, max_iter: Optional[int] = None) -> PoissonSolver:
    solver = _SOLVERS.get(space)
    if solver is None or solver.rtol != rtol or solver.max_iter != max_iter:
        solver = PoissonSolver(space, rtol, max_iter)
        _SOLVERS[space] = solver
    return solver


def solve_poisson(space: FeSpace, density: np.ndarray, dirichlet: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """W on the master dofs for a nodal density and boundary values"""
    return poisson_solver(space, rtol).solve(density, dirichlet)
