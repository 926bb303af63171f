from dataclasses import dataclass
from typing import List

import numpy as np

from ci.determinants import DeterminantSpace, spin_operators
from systems.worker_pool import WorkerPool


@dataclass
class RdmPair:
    """One- and two-body reduced density matrices.

    D[p, q] = D^p_q = <E_qp>
    P[p, q, s, r] = P^{pq}_{sr} = sum_{sigma tau} <a+_{s sigma} a+_{r tau} a_{q tau} a_{p sigma}>

    Both are plain expectation values of the (possibly unnormalized) CI vector.
    """

    one: np.ndarray
    two: np.ndarray

    def energy(self, h: np.ndarray, g: np.ndarray) -> complex:
        """sum D^p_q h^q_p + 1/2 sum P^{pq}_{sr} g^{sr}_{pq}"""
        return complex(
            np.einsum("pq,qp->", self.one, h) + 0.5 * np.einsum("pqsr,srpq->", self.two, g)
        )

    def natural_occupations(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.one + self.one.conj().T))[::-1]


def excited_vectors(space: DeterminantSpace, c: np.ndarray) -> np.ndarray:
    """V[a, b] = E_ab C (spin-summed) as [M, M, dimension]"""
    m = space.n_orbitals
    ea = spin_operators(m, space.n_alpha)
    eb = spin_operators(m, space.n_beta)
    cm = space.as_matrix(c)

    def row(a: int) -> List[np.ndarray]:
        return [(ea[a][b] @ cm + (eb[a][b] @ cm.T).T).ravel() for b in range(m)]

    return np.array(WorkerPool().map_ordered(row, range(m)))


def rdm1(space: DeterminantSpace, c: np.ndarray) -> np.ndarray:
    v = excited_vectors(space, c)
    # D[p, q] = <C| E_qp C>
    return np.einsum("i,qpi->pq", np.conj(np.asarray(c)), v)


def rdms(space: DeterminantSpace, c: np.ndarray) -> RdmPair:
    """Both density matrices from one set of excited vectors"""
    pool = WorkerPool()
    v = excited_vectors(space, c)
    m = space.n_orbitals
    one = np.einsum("i,qpi->pq", np.conj(np.asarray(c)), v)
    flat = v.reshape(m * m, -1)

    def gram_block(columns: np.ndarray) -> np.ndarray:
        part = flat[:, columns]
        return np.conj(part) @ part.T

    gram = pool.reduce_sum(gram_block, pool.split(flat.shape[1]), start=np.zeros((m * m, m * m), dtype=complex))
    gram = gram.reshape(m, m, m, m)
    two = gram.transpose(0, 3, 1, 2) - np.einsum("pr,qs->pqsr", np.eye(m), one)
    return RdmPair(one=one, two=two)


def rdm2(space: DeterminantSpace, c: np.ndarray) -> np.ndarray:
    return rdms(space, c).two
