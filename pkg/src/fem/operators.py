import logging
import weakref
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from errors import NoConvergence, SingularPotential
from fem.space import FeSpace
from grid.mesh import SimulationBox
from systems.event_system import EventSystem, SimEvent
from systems.worker_pool import WorkerPool

logger = logging.getLogger(__name__)

SYMMETRY_HINTS = ("hermitian", "complex-symmetric", "none")
NUCLEUS_SNAP = 1e-8
# Largest problem handed to the dense generalized eigensolver
DENSE_EIGEN_LIMIT = 3000


@dataclass
class SparseOperator:
    matrix: sp.csr_matrix
    symmetry_hint: str = "none"

    def __post_init__(self):
        if self.symmetry_hint not in SYMMETRY_HINTS:
            raise ValueError(f"Unknown symmetry hint {self.symmetry_hint!r}")
        self.matrix = sp.csr_matrix(self.matrix)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermitian_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


@dataclass(frozen=True)
class Nuclei:
    charges: Tuple[float, ...] = ()
    positions: Tuple[Tuple[float, ...], ...] = ()
    softening: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "charges", tuple(float(z) for z in self.charges))
        object.__setattr__(self, "positions", tuple(tuple(float(x) for x in p) for p in self.positions))
        if len(self.charges) != len(self.positions):
            raise ValueError("Every nucleus needs one charge and one position")
        if any(z <= 0 for z in self.charges):
            raise ValueError("Nuclear charges must be positive")
        if self.softening < 0:
            raise ValueError("Softening must be non-negative")
        if len({len(p) for p in self.positions}) > 1:
            raise ValueError("Nuclear positions have mixed dimensions")

    @property
    def n_nuclei(self) -> int:
        return len(self.charges)

    @property
    def dimension(self) -> Optional[int]:
        return len(self.positions[0]) if self.positions else None

    @property
    def position_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)

    def check_inside(self, box: SimulationBox) -> None:
        for p in self.positions:
            if len(p) != box.dimension or not box.contains(p):
                raise ValueError(f"Nucleus at {p} lies outside the box")

    def potential(self, points: np.ndarray) -> np.ndarray:
        """-sum_a Z_a / sqrt(|r - r_a|^2 + eps); points may be complex"""
        points = np.atleast_2d(points)
        if not self.charges:
            return np.zeros(len(points), dtype=points.dtype)
        diff = points[:, None, :] - self.position_array[None, :, :]
        r2 = np.sum(diff * diff, axis=-1) + self.softening
        return -np.sum(np.asarray(self.charges) / np.sqrt(r2), axis=1)

    def nuclear_repulsion(self) -> float:
        total = 0.0
        pos = self.position_array
        for a in range(self.n_nuclei):
            for b in range(a):
                r2 = float(np.sum((pos[a] - pos[b]) ** 2)) + self.softening
                total += self.charges[a] * self.charges[b] / np.sqrt(r2)
        return total

    def snapped(self, points: np.ndarray, tol: float = NUCLEUS_SNAP) -> "Nuclei":
        """Shift nuclei sitting on a node by tol bohr along the diagonal"""
        if not self.charges:
            return self
        points = np.atleast_2d(points)
        moved = []
        for p in self.position_array:
            if np.min(np.linalg.norm(points - p, axis=1)) < tol:
                p = p + tol / np.sqrt(len(p))
                logger.warning("Nucleus at %s coincides with a node; snapped by %g bohr", tuple(p), tol)
            moved.append(tuple(p))
        return Nuclei(self.charges, tuple(moved), self.softening)


def coulomb_target(nuclei: Nuclei) -> Callable[[np.ndarray], np.ndarray]:
    """Refinement target sum_a Z_a / |r - r_a| (with the nuclei's softening).

    Distances are floored at NUCLEUS_SNAP so a nucleus on a cell corner
    gives a large finite value instead of inf.
    """

    def target(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not nuclei.charges:
            return np.zeros(len(points))
        diff = points[:, None, :] - nuclei.position_array[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1) + nuclei.softening)
        return np.sum(np.asarray(nuclei.charges) / np.maximum(r, NUCLEUS_SNAP), axis=1)

    return target


@dataclass
class OneBodyOperators:
    kinetic: SparseOperator
    potential: SparseOperator
    gradient: List[SparseOperator] = field(default_factory=list)

    def h1(self, vector_potential: Optional[np.ndarray] = None) -> sp.csr_matrix:
        """T + V - i A(t).Dgrad as one matrix"""
        h = self.kinetic.matrix + self.potential.matrix
        if vector_potential is not None:
            for a, g in zip(np.atleast_1d(vector_potential), self.gradient):
                if a != 0.0:
                    h = h - 1j * a * g.matrix
        return h


# -- reference tensor patterns ---------------------------------------------


def _kron_axis(special: np.ndarray, other: np.ndarray, axis: int, dimension: int) -> sp.coo_matrix:
    factors = [sp.csr_matrix(special if a == axis else other) for a in range(dimension)]
    return sp.coo_matrix(reduce(sp.kron, factors))


def _reference_patterns(space: FeSpace):
    ref, d = space.reference, space.dimension
    w, D = ref.weights, ref.derivative_matrix
    mass1 = np.diag(w)
    stiff1 = D.T @ mass1 @ D
    grad1 = mass1 @ D
    stiffness = [_kron_axis(stiff1, mass1, a, d) for a in range(d)]
    gradient = [_kron_axis(grad1, mass1, a, d) for a in range(d)]
    return stiffness, gradient


def _assemble(space: FeSpace, terms: Sequence[Tuple[sp.coo_matrix, np.ndarray]]) -> sp.csr_matrix:
    """Scatter per-cell scaled copies of reference patterns into a global matrix"""
    pool = WorkerPool()
    dtype = np.result_type(*(coef.dtype for _, coef in terms))
    n = space.n_dofs

    def block(cells: np.ndarray) -> sp.csr_matrix:
        dm = space.dof_map[cells]
        rows, cols, vals = [], [], []
        for pattern, coef in terms:
            rows.append(dm[:, pattern.row].ravel())
            cols.append(dm[:, pattern.col].ravel())
            vals.append((coef[cells, None] * pattern.data[None, :]).ravel())
        vals = np.concatenate(vals).astype(dtype)
        return sp.coo_matrix((vals, (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()

    return pool.reduce_sum(block, pool.split(space.mesh.n_leaves), start=sp.csr_matrix((n, n), dtype=dtype))


def _cell_scalings(space: FeSpace, use_ecs: bool):
    sizes = space.mesh.leaf_sizes()
    jac = (0.5 * sizes) ** space.dimension
    if use_ecs and space.ecs is not None:
        eta = space.cell_scale_factors()
    else:
        eta = np.ones((space.mesh.n_leaves, space.dimension))
    volume = np.prod(eta, axis=1)
    return sizes, jac, eta, volume


def _ecs_rescale(space: FeSpace, matrix: sp.csr_matrix, use_ecs: bool = True) -> sp.csr_matrix:
    """Symmetric rescaling by the nodal complex weight ratio"""
    if not use_ecs or space.ecs is None:
        return matrix
    ratio = space.node_scale_ratio()
    if np.allclose(ratio, 1.0):
        return matrix
    s = sp.diags(ratio ** -0.5)
    return (s @ matrix @ s).tocsr()


def condense(space: FeSpace, matrix: sp.spmatrix, boundary: bool = False) -> sp.csr_matrix:
    """P^T A P: eliminate slave nodes (and boundary nodes unless boundary=True)"""
    P = space.prolongation(boundary)
    return (P.T @ matrix @ P).tocsr()


def stiffness_nodes(space: FeSpace, use_ecs: bool = True) -> sp.csr_matrix:
    """int grad b_k . grad b_l over all global nodes"""
    stiffness, _ = _reference_patterns(space)
    sizes, jac, eta, volume = _cell_scalings(space, use_ecs)
    terms = [
        (stiffness[a], jac * (2.0 / sizes) ** 2 * volume / eta[:, a] ** 2)
        for a in range(space.dimension)
    ]
    return _ecs_rescale(space, _assemble(space, terms), use_ecs)


def gradient_nodes(space: FeSpace, axis: int, use_ecs: bool = True) -> sp.csr_matrix:
    """int b_k d/dx_axis b_l over all global nodes"""
    _, gradient = _reference_patterns(space)
    sizes, jac, eta, volume = _cell_scalings(space, use_ecs)
    matrix = _assemble(space, [(gradient[axis], jac * (2.0 / sizes) * volume / eta[:, axis])])
    return _ecs_rescale(space, matrix, use_ecs)


def potential_nodes(space: FeSpace, nuclei: Nuclei, use_ecs: bool = True) -> np.ndarray:
    """Quadrature-diagonal potential values w_k V(z_k) at every global node"""
    d = space.dimension
    if nuclei.n_nuclei and nuclei.dimension != d:
        raise ValueError(f"Nuclei are {nuclei.dimension}-dimensional, space is {d}-dimensional")
    if nuclei.n_nuclei and nuclei.softening == 0.0:
        dist = np.min(
            np.linalg.norm(space.node_coords[:, None, :] - nuclei.position_array[None], axis=-1)
        )
        if dist < 1e-12:
            raise SingularPotential("A quadrature node coincides with a nucleus and softening is zero")
    _, _, _, volume = _cell_scalings(space, use_ecs)
    z = space.complex_cell_nodes() if use_ecs and space.ecs is not None else space.cell_nodes
    values = nuclei.potential(z.reshape(-1, d)).reshape(space.cell_weights.shape)
    weighted = space.cell_weights * volume[:, None] * values
    flat = space.dof_map.ravel()
    re = np.bincount(flat, weights=np.real(weighted).ravel(), minlength=space.n_dofs)
    if not np.iscomplexobj(weighted):
        return re
    im = np.bincount(flat, weights=np.imag(weighted).ravel(), minlength=space.n_dofs)
    return (re + 1j * im) / space.node_scale_ratio()


def mass_matrix(space: FeSpace, boundary: bool = False) -> SparseOperator:
    """M = P^T diag(w) P; real SPD, diagonal without hanging nodes"""
    return SparseOperator(condense(space, sp.diags(space.node_weights), boundary), "hermitian")


def position_operators(space: FeSpace) -> List[SparseOperator]:
    """Quadrature matrices of x_axis used for the length-form dipole"""
    return [
        SparseOperator(condense(space, sp.diags(space.node_weights * space.node_coords[:, a])), "hermitian")
        for a in range(space.dimension)
    ]


def assemble_one_body(space: FeSpace, nuclei: Nuclei, use_ecs: bool = True) -> OneBodyOperators:
    """Kinetic, nuclear and velocity-gauge gradient matrices on the free dofs.

    With use_ecs=False the exterior scaling of the space is ignored (the
    theta=0 operators used for initial guesses).
    """
    scaled = use_ecs and space.ecs is not None and bool(space.ecs_tag.any())
    hint = "complex-symmetric" if scaled else "hermitian"

    kinetic = condense(space, 0.5 * stiffness_nodes(space, use_ecs))
    potential = condense(space, sp.diags(potential_nodes(space, nuclei, use_ecs)))
    gradient = [condense(space, gradient_nodes(space, a, use_ecs)) for a in range(space.dimension)]

    logger.info(
        "Assembled one-body operators: %d free dofs, nnz(T)=%d, %d nuclei%s",
        space.n_free,
        kinetic.nnz,
        nuclei.n_nuclei,
        ", ECS active" if scaled else "",
    )
    return OneBodyOperators(
        kinetic=SparseOperator(kinetic, hint),
        potential=SparseOperator(potential, hint),
        gradient=[SparseOperator(g, "none") for g in gradient],
    )


# -- mass solves -------------------------------------------------------------


class MassSolver:
    """Solves M x = b; exact division when M is diagonal, Jacobi-CG otherwise"""

    def __init__(self, space: FeSpace, rtol: float = 1e-12, max_iter: Optional[int] = None):
        self.rtol = rtol
        self.max_iter = max_iter
        self.matrix = mass_matrix(space).matrix
        self.diagonal = self.matrix.diagonal()
        off = self.matrix - sp.diags(self.diagonal)
        self.is_diagonal = off.count_nonzero() == 0
        n = self.matrix.shape[0]
        self.preconditioner = spla.LinearOperator((n, n), matvec=lambda x: x / self.diagonal, dtype=float)
        self.last_iterations = 0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """x = M^-1 rhs for one vector or every row of a stack"""
        rhs = np.asarray(rhs)
        if self.is_diagonal:
            return rhs / self.diagonal
        if rhs.ndim == 2:
            return np.array([self.solve(r) for r in rhs])
        if np.iscomplexobj(rhs):
            return self._cg(rhs.real) + 1j * self._cg(rhs.imag)
        return self._cg(rhs)

    def _cg(self, b: np.ndarray) -> np.ndarray:
        if not np.any(b):
            return np.zeros_like(b)
        count = [0]

        def tick(_):
            count[0] += 1

        x, info = spla.cg(
            self.matrix,
            b,
            rtol=self.rtol,
            atol=0.0,
            maxiter=self.max_iter,
            M=self.preconditioner,
            callback=tick,
        )
        self.last_iterations = count[0]
        EventSystem().emit(SimEvent.SOLVER_ITERATIONS, solver="mass", iterations=count[0])
        if info != 0:
            raise NoConvergence(f"Mass solve did not converge in {count[0]} iterations", iterations=count[0])
        logger.debug("Mass solve: %d CG iterations", count[0])
        return x


_SOLVERS: "weakref.WeakKeyDictionary[FeSpace, MassSolver]" = weakref.WeakKeyDictionary()


def mass_solver(space: FeSpace, rtol: float = 1e-12, max_iter: Optional[int] = None) -> MassSolver:
    solver = _SOLVERS.get(space)
    if solver is None or solver.rtol != rtol or solver.max_iter != max_iter:
        solver = MassSolver(space, rtol, max_iter)
        _SOLVERS[space] = solver
    return solver


def apply_mass_inverse(space: FeSpace, rhs: np.ndarray, rtol: float = 1e-12, max_iter: Optional[int] = None) -> np.ndarray:
    return mass_solver(space, rtol, max_iter).solve(rhs)


def project(space: FeSpace, f: Callable[[np.ndarray], np.ndarray], dirichlet: bool = True) -> np.ndarray:
    """c = M^-1 (quadrature load of f) on free dofs (all masters if dirichlet=False)"""
    boundary = not dirichlet
    load = space.restrict(space.node_weights * space.interpolate(f), boundary)
    mass = mass_matrix(space, boundary).matrix
    diag = mass.diagonal()
    if (mass - sp.diags(diag)).count_nonzero() == 0:
        return load / diag
    if boundary:
        return spla.spsolve(mass.tocsc(), load)
    return apply_mass_inverse(space, load)


def generalized_eigenpairs(h: SparseOperator, mass: SparseOperator, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lowest k eigenpairs of h v = E M v, columns M-orthonormal"""
    n = h.dimension
    if k > n:
        raise ValueError(f"Requested {k} eigenpairs of a {n}-dimensional problem")
    if n <= DENSE_EIGEN_LIMIT:
        values, vectors = la.eigh(h.to_dense(), mass.to_dense(), subset_by_index=[0, k - 1])
        return values, vectors
    shift = float(np.min(h.matrix.diagonal().real / mass.matrix.diagonal().real)) - 1.0
    values, vectors = spla.eigsh(h.matrix, k=k, M=mass.matrix, sigma=shift, which="LM")
    order = np.argsort(values)
    return values[order], vectors[:, order]


def export_coo(op: SparseOperator, path: str) -> None:
    """Debug dump: one 'row col re im' line per stored entry"""
    coo = op.matrix.tocoo()
    data = np.column_stack([coo.row, coo.col, np.real(coo.data), np.imag(coo.data)])
    np.savetxt(path, data, fmt=["%d", "%d", "%.17g", "%.17g"], header="row col re im")
    logger.info("Wrote %d operator entries to %s", coo.nnz, path)
