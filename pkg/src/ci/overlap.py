import numpy as np

from ci.determinants import DeterminantSpace


def _string_overlaps(strings, orbital_overlap: np.ndarray, n_orbitals: int) -> np.ndarray:
    """det of the occupied-orbital overlap block for every pair of strings"""
    occupied = [[i for i in range(n_orbitals) if s >> i & 1] for s in strings]
    out = np.empty((len(strings), len(strings)), dtype=complex)
    for i, a in enumerate(occupied):
        for j, b in enumerate(occupied):
            out[i, j] = np.linalg.det(orbital_overlap[np.ix_(a, b)]) if a else 1.0
    return out


def overlap(
    space: DeterminantSpace,
    orbitals_a: np.ndarray,
    c_a: np.ndarray,
    orbitals_b: np.ndarray,
    c_b: np.ndarray,
    mass,
) -> complex:
    """<Psi_a|Psi_b> for two expansions over different orbital sets"""
    s = np.conj(orbitals_a) @ (mass @ np.asarray(orbitals_b).T)
    m = space.n_orbitals
    det_alpha = _string_overlaps(space.alpha_strings, s, m)
    det_beta = _string_overlaps(space.beta_strings, s, m)
    moved = det_alpha @ space.as_matrix(c_b) @ det_beta.T
    return complex(np.sum(np.conj(space.as_matrix(c_a)) * moved))
