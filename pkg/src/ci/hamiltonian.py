import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ci.determinants import DeterminantSpace, Excitations
from ci.integrals import OrbitalIntegrals
from systems.worker_pool import WorkerPool

logger = logging.getLogger(__name__)

# Below this CI dimension sigma uses the materialized matrix
DENSE_LIMIT = 500


def _scatter(ex: Excitations, n_strings: int) -> sp.csr_matrix:
    """[n_strings, n_moves] map adding each move's value to its target string"""
    return sp.csr_matrix(
        (np.ones(len(ex)), (ex.target, np.arange(len(ex)))), shape=(n_strings, len(ex))
    )


def same_spin_hamiltonian(ex: Excitations, n_strings: int, hprime: np.ndarray, chem: np.ndarray) -> sp.csr_matrix:
    """sum h'_pq E_pq + 1/2 sum (pq|rs) E_pq E_rs within one spin"""
    if len(ex) == 0:
        return sp.csr_matrix((n_strings, n_strings), dtype=complex)
    one = sp.coo_matrix(
        (hprime[ex.p, ex.q] * ex.sign, (ex.target, ex.source)), shape=(n_strings, n_strings)
    )
    # Second move (pq) out of every intermediate string reached by a first move (rs)
    k = ex.per_string
    second = ex.target[:, None] * k + np.arange(k)[None, :]
    values = (
        0.5
        * chem[ex.p[second], ex.q[second], ex.p[:, None], ex.q[:, None]]
        * ex.sign[second]
        * ex.sign[:, None]
    )
    rows = ex.target[second]
    cols = np.broadcast_to(ex.source[:, None], second.shape)
    two = sp.coo_matrix((values.ravel(), (rows.ravel(), cols.ravel())), shape=(n_strings, n_strings))
    return (one + two).tocsr()


class CiHamiltonian:
    """Slater-Condon action of the electronic Hamiltonian on CI vectors.

    H = sum_pq h'_pq E_pq + 1/2 sum_pqrs (pq|rs) E_pq E_rs with
    h' = h - 1/2 sum_r (pr|rq). The same-spin parts are sparse string
    matrices; the opposite-spin part is sum (pq|rs) Ea_pq Eb_rs, applied as
    scatter(alpha) [G o C(moves)] scatter(beta)^T.
    """

    def __init__(self, space: DeterminantSpace, ints: OrbitalIntegrals):
        if ints.n_orbitals != space.n_orbitals:
            raise ValueError(
                f"Integrals over {ints.n_orbitals} orbitals do not match a space of {space.n_orbitals}"
            )
        self.space = space
        self.ints = ints
        chem = ints.chemist
        hprime = ints.h - 0.5 * np.einsum("prrq->pq", chem)
        na, nb = space.shape
        self.alpha_moves = space.alpha_excitations
        self.beta_moves = space.beta_excitations
        self.h_alpha = same_spin_hamiltonian(self.alpha_moves, na, hprime, chem)
        self.h_beta = same_spin_hamiltonian(self.beta_moves, nb, hprime, chem)

        ea, eb = self.alpha_moves, self.beta_moves
        self.coupling = (
            chem[ea.p[:, None], ea.q[:, None], eb.p[None, :], eb.q[None, :]]
            * ea.sign[:, None]
            * eb.sign[None, :]
        )
        self.scatter_alpha = _scatter(ea, na)
        self.scatter_beta = _scatter(eb, nb)
        self._dense: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:
        return self.space.dimension

    def sigma(self, c: np.ndarray) -> np.ndarray:
        """H C without materializing H (dense path below DENSE_LIMIT)"""
        c = np.asarray(c)
        if self.dimension < DENSE_LIMIT:
            return self.dense() @ c
        return self._sigma_strings(c)

    def _sigma_strings(self, c: np.ndarray) -> np.ndarray:
        cm = self.space.as_matrix(c)
        pool = WorkerPool()
        blocks = pool.map_ordered(lambda rows: self._sigma_rows(cm, rows), pool.split(cm.shape[0]))
        return np.concatenate(blocks, axis=0).ravel()

    def _sigma_rows(self, cm: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Rows of the sigma matrix for a contiguous block of alpha strings"""
        out = self.h_alpha[rows] @ cm + (self.h_beta @ cm[rows].T).T
        if len(self.alpha_moves) and len(self.beta_moves):
            scatter = self.scatter_alpha[rows]
            moves = np.unique(scatter.indices)
            if len(moves):
                moved = cm[self.alpha_moves.source[moves]][:, self.beta_moves.source]
                half = scatter[:, moves] @ (self.coupling[moves] * moved)
                out = out + (self.scatter_beta @ half.T).T
        return out

    def dense(self) -> np.ndarray:
        if self._dense is None:
            na, nb = self.space.shape
            h = sp.kron(self.h_alpha, sp.identity(nb)) + sp.kron(sp.identity(na), self.h_beta)
            dense = h.toarray().astype(complex)
            ea, eb = self.alpha_moves, self.beta_moves
            if len(ea) and len(eb):
                rows = (ea.target[:, None] * nb + eb.target[None, :]).ravel()
                cols = (ea.source[:, None] * nb + eb.source[None, :]).ravel()
                np.add.at(dense, (rows, cols), self.coupling.ravel())
            self._dense = dense
        return self._dense

    def linear_operator(self) -> spla.LinearOperator:
        n = self.dimension
        return spla.LinearOperator((n, n), matvec=self._sigma_strings, dtype=complex)

    def expectation(self, c: np.ndarray) -> complex:
        c = np.asarray(c)
        return complex(np.vdot(c, self.sigma(c)) / np.vdot(c, c).real)


def sigma(space: DeterminantSpace, ints: OrbitalIntegrals, c: np.ndarray) -> np.ndarray:
    return CiHamiltonian(space, ints).sigma(c)


def apply_x(space: DeterminantSpace, x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """sum_pq X_pq E_pq acting on C (the gauge term of the CI equation)"""
    cm = space.as_matrix(c).astype(complex)
    out = np.zeros_like(cm)
    ea, eb = space.alpha_excitations, space.beta_excitations
    if len(ea):
        contrib = x[ea.p, ea.q][:, None] * ea.sign[:, None] * cm[ea.source]
        np.add.at(out, ea.target, contrib)
    if len(eb):
        contrib = x[eb.p, eb.q][None, :] * eb.sign[None, :] * cm[:, eb.source]
        np.add.at(out.T, eb.target, contrib.T)
    return out.ravel()


def ground_state(ham: CiHamiltonian) -> Tuple[complex, np.ndarray]:
    """Lowest (real part) eigenpair, unit-normalized"""
    hermitian = ham.ints.hermitian_defect() < 1e-10
    if ham.dimension <= DENSE_LIMIT:
        h = ham.dense()
        if hermitian:
            values, vectors = la.eigh(0.5 * (h + h.conj().T), subset_by_index=[0, 0])
            energy, vector = values[0], vectors[:, 0]
        else:
            values, vectors = la.eig(h)
            k = int(np.argmin(values.real))
            energy, vector = values[k], vectors[:, k]
    elif hermitian:
        values, vectors = spla.eigsh(ham.linear_operator(), k=1, which="SA")
        energy, vector = values[0], vectors[:, 0]
    else:
        values, vectors = spla.eigs(ham.linear_operator(), k=1, which="SR")
        energy, vector = values[0], vectors[:, 0]
    vector = vector.astype(complex)
    vector /= np.linalg.norm(vector)
    logger.debug("CI ground state: E = %.12f (dimension %d)", float(np.real(energy)), ham.dimension)
    return complex(energy), vector
