from ci.determinants import DeterminantSpace, enumerate_determinants
from ci.hamiltonian import CiHamiltonian, apply_x, ground_state, sigma
from ci.integrals import OrbitalIntegrals, integrals
from ci.overlap import overlap
from ci.rdm import RdmPair, rdm1, rdm2, rdms

__all__ = [
    "CiHamiltonian",
    "DeterminantSpace",
    "OrbitalIntegrals",
    "RdmPair",
    "apply_x",
    "enumerate_determinants",
    "ground_state",
    "integrals",
    "overlap",
    "rdm1",
    "rdm2",
    "rdms",
    "sigma",
]
