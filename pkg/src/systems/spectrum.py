import logging
import os
from typing import Optional, Tuple

import numpy as np
from scipy.fft import rfft, rfftfreq
from scipy.signal.windows import get_window

from errors import TooFewSamples

logger = logging.getLogger(__name__)

MIN_SAMPLES = 4
WINDOWS = ("none", "hann")
QUANTITIES = ("dipole", "velocity", "acceleration")
SAMPLING_RTOL = 1e-6


def hhg_spectrum(
    times: np.ndarray,
    dipole: np.ndarray,
    window: str = "hann",
    quantity: str = "acceleration",
) -> Tuple[np.ndarray, np.ndarray]:
    """Harmonic spectrum |FT[q(t)]|^2 summed over polarization axes.

    The dipole trace is windowed first; velocity and acceleration are then
    obtained by central differences. The intensity is normalized to a
    maximum of one (an all-zero trace gives an all-zero spectrum).
    Returns angular frequencies and intensities.
    """
    if window not in WINDOWS:
        raise ValueError(f"Unknown window {window!r}; expected one of {WINDOWS}")
    if quantity not in QUANTITIES:
        raise ValueError(f"Unknown quantity {quantity!r}; expected one of {QUANTITIES}")
    times = np.asarray(times, dtype=float)
    dipole = np.asarray(dipole, dtype=float)
    if dipole.ndim == 1:
        dipole = dipole[:, None]
    n = len(times)
    if n < MIN_SAMPLES:
        raise TooFewSamples(f"{n} dipole samples; at least {MIN_SAMPLES} are needed")
    if dipole.shape[0] != n:
        raise ValueError(f"{dipole.shape[0]} dipole rows for {n} times")

    steps = np.diff(times)
    dt = float(steps.mean())
    if dt <= 0 or not np.allclose(steps, dt, rtol=SAMPLING_RTOL, atol=0.0):
        raise ValueError("Dipole trace must be sampled on a uniform increasing time grid")

    signal = dipole.copy()
    if window == "hann":
        signal = signal * get_window("hann", n, fftbins=False)[:, None]
    if quantity in ("velocity", "acceleration"):
        signal = np.gradient(signal, dt, axis=0)
    if quantity == "acceleration":
        signal = np.gradient(signal, dt, axis=0)

    intensity = np.sum(np.abs(rfft(signal, axis=0)) ** 2, axis=1)
    omega = 2.0 * np.pi * rfftfreq(n, dt)
    peak = intensity.max()
    if peak > 0:
        intensity = intensity / peak
    return omega, intensity


def load_dipole(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read a dipole.txt file: time column then one column per axis"""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path} needs a time column and at least one dipole column")
    return data[:, 0], data[:, 1:]


def write_spectrum(
    omega: np.ndarray,
    intensity: np.ndarray,
    path: str,
    omega0: Optional[float] = None,
) -> None:
    """Columnar spectrum file; adds a harmonic-order column when omega0 is known"""
    columns = [omega, intensity]
    header = "omega[a.u.] intensity[arb.]"
    if omega0 is not None:
        columns.insert(1, omega / omega0)
        header = "omega[a.u.] harmonic intensity[arb.]"
    np.savetxt(path, np.column_stack(columns), fmt="%.10e", header=header)
    logger.info("Wrote spectrum with %d frequencies to %s", len(omega), path)


def spectrum_from_file(
    dipole_path: str,
    window: str = "hann",
    quantity: str = "acceleration",
    omega0: Optional[float] = None,
) -> str:
    """Spectrum of a dipole file, written next to it as spectrum.txt"""
    times, dipole = load_dipole(dipole_path)
    omega, intensity = hhg_spectrum(times, dipole, window, quantity)
    out = os.path.join(os.path.dirname(os.path.abspath(dipole_path)), "spectrum.txt")
    write_spectrum(omega, intensity, out, omega0)
    return out
