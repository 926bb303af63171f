import numpy as np

# Atomic units
SPEED_OF_LIGHT = 137.035999
BOHR_IN_METERS = 5.29177210903e-11
ATOMIC_INTENSITY_WCM2 = 3.50944758e16
HARTREE_IN_EV = 27.211386245988


def wavelength_to_omega(wavelength_nm: float) -> float:
    """Angular frequency (a.u.) of light with the given vacuum wavelength"""
    wavelength_bohr = wavelength_nm * 1e-9 / BOHR_IN_METERS
    return 2.0 * np.pi * SPEED_OF_LIGHT / wavelength_bohr


def omega_to_wavelength(omega: float) -> float:
    """Inverse of wavelength_to_omega, in nm"""
    wavelength_bohr = 2.0 * np.pi * SPEED_OF_LIGHT / omega
    return wavelength_bohr * BOHR_IN_METERS * 1e9


def intensity_to_field(intensity_wcm2: float) -> float:
    """Peak field amplitude (a.u.) for a peak intensity in W/cm^2"""
    return float(np.sqrt(intensity_wcm2 / ATOMIC_INTENSITY_WCM2))


def field_to_intensity(e0: float) -> float:
    return float(e0**2 * ATOMIC_INTENSITY_WCM2)
