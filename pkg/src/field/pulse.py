import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Dict, List, Sequence, Tuple, Type, Union

import numpy as np

from field.units import (
    field_to_intensity,
    intensity_to_field,
    omega_to_wavelength,
    wavelength_to_omega,
)

logger = logging.getLogger(__name__)

TimeLike = Union[float, np.ndarray]


class Envelope:
    """Piecewise-linear pulse envelope.

    Subclasses describe the envelope as linear pieces f(t) = a + b*t on
    [t0, t1]; the vector potential is integrated in closed form over them.
    """

    name = "envelope"

    def segments(self, omega: float, n_cycles: float) -> List[Tuple[float, float, float, float]]:
        raise NotImplementedError

    def value(self, t: TimeLike, omega: float, n_cycles: float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for t0, t1, a, b in self.segments(omega, n_cycles):
            inside = (t >= t0) & (t <= t1)
            out = np.where(inside, a + b * t, out)
        return out


class TriangularEnvelope(Envelope):
    """Linear ramp up over the first half of the pulse, linear ramp down after"""

    name = "triangular"

    def segments(self, omega, n_cycles):
        half = np.pi * n_cycles / omega
        slope = omega / (np.pi * n_cycles)
        return [(0.0, half, 0.0, slope), (half, 2.0 * half, 2.0, -slope)]


ENVELOPES: Dict[str, Type[Envelope]] = {"triangular": TriangularEnvelope}


def register_envelope(name: str, envelope_cls: Type[Envelope]) -> None:
    """Make a piecewise-linear envelope available to run configurations"""
    if not issubclass(envelope_cls, Envelope):
        raise TypeError(f"{envelope_cls!r} is not an Envelope")
    ENVELOPES[name] = envelope_cls


@dataclass(frozen=True)
class Pulse:
    wavelength_nm: float
    peak_intensity_wcm2: float
    n_cycles: float = 2.0
    polarization: Tuple[float, ...] = (1.0,)
    envelope: str = "triangular"
    _shape: Envelope = dataclass_field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pol = np.asarray(self.polarization, dtype=float)
        norm = np.linalg.norm(pol)
        if norm == 0:
            raise ValueError("Polarization vector must be nonzero")
        if self.envelope not in ENVELOPES:
            raise ValueError(f"Unknown envelope '{self.envelope}'")
        if self.wavelength_nm <= 0 or self.peak_intensity_wcm2 < 0 or self.n_cycles <= 0:
            raise ValueError("Pulse needs positive wavelength and cycles, non-negative intensity")
        object.__setattr__(self, "polarization", tuple(pol / norm))
        object.__setattr__(self, "_shape", ENVELOPES[self.envelope]())

    @classmethod
    def from_atomic_units(
        cls,
        omega: float,
        e0: float,
        n_cycles: float = 2.0,
        polarization: Sequence[float] = (1.0,),
        envelope: str = "triangular",
    ) -> "Pulse":
        """Build a pulse from angular frequency and peak field in a.u."""
        return cls(
            wavelength_nm=omega_to_wavelength(omega),
            peak_intensity_wcm2=field_to_intensity(e0),
            n_cycles=n_cycles,
            polarization=tuple(polarization),
            envelope=envelope,
        )

    @property
    def omega(self) -> float:
        return wavelength_to_omega(self.wavelength_nm)

    @property
    def e0(self) -> float:
        return intensity_to_field(self.peak_intensity_wcm2)

    @property
    def duration(self) -> float:
        return 2.0 * np.pi * self.n_cycles / self.omega

    @property
    def dimension(self) -> int:
        return len(self.polarization)

    def envelope_value(self, t: TimeLike) -> np.ndarray:
        return self._shape.value(t, self.omega, self.n_cycles)

    def amplitude(self, t: TimeLike) -> np.ndarray:
        """Field component along the polarization"""
        t = np.asarray(t, dtype=float)
        return self.e0 * self.envelope_value(t) * np.sin(self.omega * t)

    def potential_amplitude(self, t: TimeLike) -> np.ndarray:
        """Vector potential component along the polarization, -int_0^t E"""
        t = np.asarray(t, dtype=float)
        w = self.omega
        total = np.zeros_like(t)
        for t0, t1, a, b in self._shape.segments(w, self.n_cycles):
            upper = np.clip(t, t0, t1)

            def antiderivative(tau):
                return -(a + b * tau) * np.cos(w * tau) / w + b * np.sin(w * tau) / w**2

            total = total + np.where(t > t0, antiderivative(upper) - antiderivative(t0), 0.0)
        return -self.e0 * total

    def electric_field(self, t: TimeLike) -> np.ndarray:
        return np.multiply.outer(self.amplitude(t), np.asarray(self.polarization))

    def vector_potential(self, t: TimeLike) -> np.ndarray:
        return np.multiply.outer(self.potential_amplitude(t), np.asarray(self.polarization))


def electric_field(pulse: Pulse, t: TimeLike) -> np.ndarray:
    """E(t) as a d-vector (or array of d-vectors for array t)"""
    return pulse.electric_field(t)


def vector_potential(pulse: Pulse, t: TimeLike) -> np.ndarray:
    """A(t) = -int_0^t E(t') dt' in closed form"""
    return pulse.vector_potential(t)


def write_field_samples(pulse: Pulse, times: np.ndarray, path: str) -> None:
    """Two-column text dump of the field along the polarization"""
    times = np.asarray(times, dtype=float)
    data = np.column_stack([times, pulse.amplitude(times)])
    np.savetxt(path, data, fmt="%.10e", header="t[a.u.] E[a.u.]")
    logger.info("Wrote %d field samples to %s", len(times), path)
