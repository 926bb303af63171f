from dataclasses import dataclass
from typing import Optional

import numpy as np

from fem.operators import OneBodyOperators
from fem.space import FeSpace
from meanfield.table import MeanFieldTable


@dataclass
class OrbitalIntegrals:
    """Orbital-basis integrals.

    h[p, q] = <phi_p| T + V - i A.grad |phi_q>
    g[p, q, s, r] = g^{pq}_{sr} = int phi_p^*(1) W^q_r(1) phi_s(1)
                  = int int phi_p^*(1) phi_q^*(2) phi_r(2) phi_s(1) / r12

    In chemists' notation (ps|qr) = g[p, q, s, r], i.e. chem = g.transpose(0, 2, 1, 3).
    """

    h: np.ndarray
    g: np.ndarray

    @property
    def n_orbitals(self) -> int:
        return self.h.shape[0]

    @property
    def chemist(self) -> np.ndarray:
        return self.g.transpose(0, 2, 1, 3)

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.h - self.h.conj().T)))


def one_body_integrals(orbitals: np.ndarray, h1) -> np.ndarray:
    orbitals = np.atleast_2d(orbitals)
    return np.conj(orbitals) @ (h1 @ orbitals.T)


def two_body_integrals(space: FeSpace, orbitals: np.ndarray, table: MeanFieldTable) -> np.ndarray:
    """g[p, q, s, r] by nodal quadrature of phi_p^* W^q_r phi_s"""
    nodal = space.nodal(np.atleast_2d(orbitals))
    n = nodal.shape[0]
    pair = (np.conj(nodal)[:, None, :] * nodal[None, :, :] * space.node_weights).reshape(n * n, -1)
    fields = table.values.reshape(n * n, -1)
    # [p, s] x [q, r] -> g[p, q, s, r]
    return (pair @ fields.T).reshape(n, n, n, n).transpose(0, 2, 1, 3)


def integrals(
    space: FeSpace,
    orbitals: np.ndarray,
    table: MeanFieldTable,
    operators: OneBodyOperators,
    vector_potential: Optional[np.ndarray] = None,
) -> OrbitalIntegrals:
    h1 = operators.h1(vector_potential)
    return OrbitalIntegrals(
        h=one_body_integrals(orbitals, h1),
        g=two_body_integrals(space, orbitals, table),
    )
