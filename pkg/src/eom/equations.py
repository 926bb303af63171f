import numpy as np

from eom.coupling import FrozenCoupling
from systems.worker_pool import WorkerPool


def _solve_rows(fc: FrozenCoupling, y: np.ndarray) -> np.ndarray:
    solver = fc.system.solver
    if solver.is_diagonal:
        return solver.solve(y)
    return np.array(WorkerPool().map_ordered(solver.solve, list(y)))


def apply_g(fc: FrozenCoupling, u: np.ndarray) -> np.ndarray:
    """Frozen linear orbital operator G acting on stacked vectors [M, n_free].

    G u_p = Q M^-1 [H1 u_p + M (sum_q U_pq o u_q)] + i sum_q X_qp u_q, with
    Q = 1 - sum_q c_q c_q^H M built from the snapshot orbitals.
    """
    space = fc.system.space
    u = np.asarray(u, dtype=complex).reshape(fc.orbitals.shape)
    y = (fc.h1 @ u.T).T
    nodal = space.nodal(u)
    field = np.einsum("pqn,qn->pn", fc.mean_field, nodal)
    y = y + space.restrict(space.node_weights * field)

    z = _solve_rows(fc, y)
    # Q projection with the frozen orbitals; c_q^H y_p is the M-inner product of c_q and M^-1 y_p
    projections = np.conj(fc.orbitals) @ y.T
    z = z - projections.T @ fc.orbitals
    if np.any(fc.x):
        z = z + 1j * (fc.x.T @ u)
    return z


def apply_g_flat(fc: FrozenCoupling):
    """apply_g as a closure over flattened vectors (the Krylov interface)"""
    shape = fc.orbitals.shape

    def apply(v: np.ndarray) -> np.ndarray:
        return apply_g(fc, v.reshape(shape)).ravel()

    return apply


def orbital_rhs(fc: FrozenCoupling, orbitals: np.ndarray = None) -> np.ndarray:
    """d phi / dt = -i G phi on the snapshot (or given) orbitals"""
    return -1j * apply_g(fc, fc.orbitals if orbitals is None else orbitals)


def ci_rhs(fc: FrozenCoupling, c: np.ndarray) -> np.ndarray:
    """dC/dt = -i H C with the frozen integrals"""
    return -1j * fc.hamiltonian.sigma(c)


def total_energy(fc: FrozenCoupling) -> complex:
    """sum D h + 1/2 sum P g for the normalized snapshot"""
    return fc.energy
