from dataclasses import dataclass

import numpy as np

from ci.determinants import DeterminantSpace


def orbital_overlap(orbitals: np.ndarray, mass) -> np.ndarray:
    """S[p, q] = <phi_p|phi_q> = c_p^H M c_q"""
    orbitals = np.atleast_2d(orbitals)
    return np.conj(orbitals) @ (mass @ orbitals.T)


def lowdin(orbitals: np.ndarray, mass) -> np.ndarray:
    """Symmetric orthonormalization phi' = S^{-1/2} phi"""
    s = orbital_overlap(orbitals, mass)
    values, vectors = np.linalg.eigh(0.5 * (s + s.conj().T))
    if values.min() <= 0:
        raise np.linalg.LinAlgError("Orbitals are linearly dependent")
    inv_sqrt = (vectors * values**-0.5) @ vectors.conj().T
    return inv_sqrt.T @ orbitals


@dataclass
class WaveFunction:
    orbitals: np.ndarray  # [M, n_free]
    ci: np.ndarray  # [dimension]
    space: DeterminantSpace

    def __post_init__(self):
        self.orbitals = np.array(self.orbitals, dtype=complex, ndmin=2)
        self.ci = np.array(self.ci, dtype=complex)
        if self.orbitals.shape[0] != self.space.n_orbitals:
            raise ValueError(
                f"{self.orbitals.shape[0]} orbitals given for a space over {self.space.n_orbitals}"
            )
        if self.ci.shape != (self.space.dimension,):
            raise ValueError(f"CI vector of length {self.ci.size}, expected {self.space.dimension}")

    @property
    def n_orbitals(self) -> int:
        return self.orbitals.shape[0]

    def copy(self) -> "WaveFunction":
        return WaveFunction(self.orbitals.copy(), self.ci.copy(), self.space)

    def norm(self) -> float:
        return float(np.linalg.norm(self.ci))

    def overlap_matrix(self, mass) -> np.ndarray:
        return orbital_overlap(self.orbitals, mass)

    def orthonormality_defect(self, mass) -> float:
        s = self.overlap_matrix(mass)
        return float(np.max(np.abs(s - np.eye(self.n_orbitals))))

    def with_phase(self, phase: complex) -> "WaveFunction":
        """All orbitals multiplied by one global phase"""
        return WaveFunction(self.orbitals * phase, self.ci.copy(), self.space)
