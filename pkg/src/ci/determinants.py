import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Dict, List, Tuple

import numpy as np
import scipy.sparse as sp

from errors import Overflow

logger = logging.getLogger(__name__)

DEFAULT_MAX_DETERMINANTS = 2_000_000


@dataclass(frozen=True)
class Excitations:
    """All single-spin moves E_pq|J> = sign |I>, including p == q.

    Arrays are grouped by source string: entries [k*J, k*(J+1)) belong to
    string J, with k = n (M - n + 1) moves per string.
    """

    source: np.ndarray
    target: np.ndarray
    p: np.ndarray
    q: np.ndarray
    sign: np.ndarray
    per_string: int

    def __len__(self) -> int:
        return len(self.source)


def _occupation_sign(mask: int, orbital: int) -> int:
    return -1 if bin(mask & ((1 << orbital) - 1)).count("1") % 2 else 1


@lru_cache(maxsize=32)
def string_list(n_orbitals: int, n_electrons: int) -> Tuple[int, ...]:
    """Occupation bitmasks in lexicographic order of their occupied indices"""
    return tuple(
        sum(1 << i for i in occupied)
        for occupied in itertools.combinations(range(n_orbitals), n_electrons)
    )


@lru_cache(maxsize=32)
def excitation_list(n_orbitals: int, n_electrons: int) -> Excitations:
    strings = string_list(n_orbitals, n_electrons)
    index = {s: i for i, s in enumerate(strings)}
    source, target, ps, qs, signs = [], [], [], [], []
    for j, mask in enumerate(strings):
        for q in range(n_orbitals):
            if not mask >> q & 1:
                continue
            removed = mask ^ (1 << q)
            sign_q = _occupation_sign(mask, q)
            for p in range(n_orbitals):
                if removed >> p & 1:
                    continue
                source.append(j)
                target.append(index[removed | (1 << p)])
                ps.append(p)
                qs.append(q)
                signs.append(sign_q * _occupation_sign(removed, p))
    return Excitations(
        source=np.asarray(source, dtype=np.int64),
        target=np.asarray(target, dtype=np.int64),
        p=np.asarray(ps, dtype=np.int64),
        q=np.asarray(qs, dtype=np.int64),
        sign=np.asarray(signs, dtype=float),
        per_string=n_electrons * (n_orbitals - n_electrons + 1),
    )


@dataclass
class DeterminantSpace:
    """Full CI space over M spatial orbitals, alpha string major.

    Determinant (ia, ib) sits at position ia * n_beta_strings + ib; CI
    vectors are often handled as [n_alpha_strings, n_beta_strings] matrices.
    """

    n_alpha: int
    n_beta: int
    n_orbitals: int
    alpha_strings: Tuple[int, ...] = field(init=False)
    beta_strings: Tuple[int, ...] = field(init=False)

    def __post_init__(self):
        self.alpha_strings = string_list(self.n_orbitals, self.n_alpha)
        self.beta_strings = string_list(self.n_orbitals, self.n_beta)
        self._alpha_index: Dict[int, int] = {s: i for i, s in enumerate(self.alpha_strings)}
        self._beta_index: Dict[int, int] = {s: i for i, s in enumerate(self.beta_strings)}

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.alpha_strings), len(self.beta_strings)

    @property
    def dimension(self) -> int:
        return len(self.alpha_strings) * len(self.beta_strings)

    @property
    def alpha_excitations(self) -> Excitations:
        return excitation_list(self.n_orbitals, self.n_alpha)

    @property
    def beta_excitations(self) -> Excitations:
        return excitation_list(self.n_orbitals, self.n_beta)

    def index(self, alpha: int, beta: int) -> int:
        """CI position of the determinant with the given occupation bitmasks"""
        return self._alpha_index[alpha] * len(self.beta_strings) + self._beta_index[beta]

    def occupations(self, position: int) -> Tuple[List[int], List[int]]:
        ia, ib = divmod(position, len(self.beta_strings))
        a, b = self.alpha_strings[ia], self.beta_strings[ib]
        return (
            [i for i in range(self.n_orbitals) if a >> i & 1],
            [i for i in range(self.n_orbitals) if b >> i & 1],
        )

    def as_matrix(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c).reshape(self.shape)

    def reference_vector(self) -> np.ndarray:
        """Aufbau determinant: lowest orbitals occupied in both spins"""
        c = np.zeros(self.dimension, dtype=complex)
        c[0] = 1.0
        return c


@lru_cache(maxsize=32)
def spin_operators(n_orbitals: int, n_electrons: int) -> List[List[sp.csr_matrix]]:
    """E_pq restricted to one spin as sparse [n_strings, n_strings] matrices"""
    ex = excitation_list(n_orbitals, n_electrons)
    n = len(string_list(n_orbitals, n_electrons))
    ops = [[None] * n_orbitals for _ in range(n_orbitals)]
    for p in range(n_orbitals):
        for q in range(n_orbitals):
            sel = (ex.p == p) & (ex.q == q)
            ops[p][q] = sp.csr_matrix((ex.sign[sel], (ex.target[sel], ex.source[sel])), shape=(n, n))
    return ops


def enumerate_determinants(n_alpha: int, n_beta: int, n_orbitals: int, cap: int = DEFAULT_MAX_DETERMINANTS) -> DeterminantSpace:
    """Full CI determinant space; Overflow above the cap"""
    if not (0 <= n_alpha <= n_orbitals and 0 <= n_beta <= n_orbitals):
        raise ValueError(f"Cannot place ({n_alpha}, {n_beta}) electrons in {n_orbitals} orbitals")
    dimension = comb(n_orbitals, n_alpha) * comb(n_orbitals, n_beta)
    if dimension > cap:
        raise Overflow(f"Determinant space of dimension {dimension} exceeds cap {cap}")
    space = DeterminantSpace(n_alpha, n_beta, n_orbitals)
    logger.debug("Determinant space (%d, %d, M=%d): %d determinants", n_alpha, n_beta, n_orbitals, dimension)
    return space
