import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ci.hamiltonian import CiHamiltonian
from ci.integrals import OrbitalIntegrals
from ci.rdm import RdmPair, rdms
from eom.system import ElectronicSystem
from eom.wavefunction import WaveFunction
from errors import SingularDensity
from meanfield.table import MeanFieldTable
from systems.event_system import EventSystem, SimEvent

logger = logging.getLogger(__name__)

DENSITY_CUTOFF = 1e-8


@dataclass(frozen=True)
class FrozenCoupling:
    """Snapshot of one wavefunction: densities, mean fields and integrals.

    Everything here is fixed for the duration of a step, which makes the
    orbital equation linear in the propagated orbitals.
    """

    system: ElectronicSystem
    time: float
    orbitals: np.ndarray
    ci: np.ndarray
    rdms: RdmPair
    dinv: np.ndarray
    table: MeanFieldTable
    vector_potential: np.ndarray
    h1: sp.csr_matrix
    integrals: OrbitalIntegrals
    hamiltonian: CiHamiltonian
    mean_field: np.ndarray  # U[p, q, node] = sum_rs K[p, q, r, s] W^r_s
    x: np.ndarray
    regularized: bool = False

    @property
    def energy(self) -> complex:
        return self.rdms.energy(self.integrals.h, self.integrals.g)


def density_pseudo_inverse(one: np.ndarray, cutoff: float = DENSITY_CUTOFF):
    """Eigenvalue-cutoff inverse of the Hermitian part of D; returns (Dinv, dropped)"""
    values, vectors = np.linalg.eigh(0.5 * (one + one.conj().T))
    keep = values > cutoff
    if not keep.any():
        raise SingularDensity(f"No density-matrix eigenvalue above {cutoff:g} (max {values.max():.3e})")
    inverse = np.where(keep, 1.0 / np.where(keep, values, 1.0), 0.0)
    return (vectors * inverse) @ vectors.conj().T, int((~keep).sum())


def freeze(system: ElectronicSystem, wf: WaveFunction, t: float, cutoff: float = DENSITY_CUTOFF) -> FrozenCoupling:
    orbitals = wf.orbitals.copy()
    norm = np.linalg.norm(wf.ci)
    ci = wf.ci / norm if norm > 0 else wf.ci.copy()

    pair = rdms(wf.space, ci)
    dinv, dropped = density_pseudo_inverse(pair.one, cutoff)
    if dropped:
        logger.info("Density matrix regularized: %d eigenvalue(s) below %g at t=%.4f", dropped, cutoff, t)
        EventSystem().emit(SimEvent.DENSITY_REGULARIZED, time=t, dropped=dropped)

    table = system.mean_fields(orbitals)
    a_t = system.vector_potential(t)
    ints = system.integrals(orbitals, t, table)

    # K[p, q, r, s] = sum_o Dinv[o, p] P[q, s, o, r]
    kernel = np.einsum("op,qsor->pqrs", dinv, pair.two)
    mean_field = np.einsum("pqrs,rsn->pqn", kernel, table.values)

    return FrozenCoupling(
        system=system,
        time=t,
        orbitals=orbitals,
        ci=wf.ci.copy(),
        rdms=pair,
        dinv=dinv,
        table=table,
        vector_potential=a_t,
        h1=system.operators.h1(a_t),
        integrals=ints,
        hamiltonian=CiHamiltonian(wf.space, ints),
        mean_field=mean_field,
        x=np.zeros((wf.n_orbitals, wf.n_orbitals), dtype=complex),
        regularized=bool(dropped),
    )
