from eom.coupling import FrozenCoupling, density_pseudo_inverse, freeze
from eom.equations import apply_g, apply_g_flat, ci_rhs, orbital_rhs, total_energy
from eom.system import ElectronicSystem
from eom.wavefunction import WaveFunction, lowdin, orbital_overlap

__all__ = [
    "ElectronicSystem",
    "FrozenCoupling",
    "WaveFunction",
    "apply_g",
    "apply_g_flat",
    "ci_rhs",
    "density_pseudo_inverse",
    "freeze",
    "lowdin",
    "orbital_overlap",
    "orbital_rhs",
    "total_energy",
]
