import logging
from collections import Counter
from typing import Tuple

import numpy as np

from ci.hamiltonian import CiHamiltonian
from eom.coupling import FrozenCoupling, freeze
from eom.equations import apply_g_flat
from eom.system import ElectronicSystem
from eom.wavefunction import WaveFunction
from krylov.arnoldi import ArnoldiWorkspace, arnoldi_exp
from systems.event_system import EventData, EventSystem, SimEvent

logger = logging.getLogger(__name__)

SPLITTINGS = ("sequential", "strang")


class KrylovStatistics:
    """Collects StepReports from KRYLOV_STEP events"""

    def __init__(self):
        self.histogram: Counter = Counter()
        self.max_error = 0.0
        self.breakdowns = 0
        self.event_system = EventSystem()

    def attach(self):
        self.event_system.subscribe(SimEvent.KRYLOV_STEP, self._on_step)

    def detach(self):
        self.event_system.unsubscribe(SimEvent.KRYLOV_STEP, self._on_step)

    def _on_step(self, event_data: EventData):
        report = event_data.data["report"]
        self.histogram[report.dim_used] += 1
        self.max_error = max(self.max_error, report.error_estimate)
        self.breakdowns += int(report.happy_breakdown)

    @property
    def steps(self) -> int:
        return sum(self.histogram.values())

    def summary(self) -> str:
        bins = " ".join(f"{m}:{n}" for m, n in sorted(self.histogram.items()))
        return f"Krylov dimensions [{bins}], {self.breakdowns} breakdown(s), max error {self.max_error:.2e}"


class RealTimePropagator:
    """One step: freeze at t, Arnoldi on the orbitals, Arnoldi on C.

    With splitting="strang" the CI update is split into two half steps
    around the orbital step, the second half using integrals of the new
    orbitals at t + dt.
    """

    def __init__(
        self,
        system: ElectronicSystem,
        dt: float,
        m_max: int = 15,
        tol: float = 1e-10,
        splitting: str = "sequential",
    ):
        if dt <= 0:
            raise ValueError("Time step must be positive")
        if splitting not in SPLITTINGS:
            raise ValueError(f"Unknown splitting {splitting!r}; expected one of {SPLITTINGS}")
        self.system = system
        self.dt = dt
        self.m_max = m_max
        self.tol = tol
        self.splitting = splitting
        self.workspace = ArnoldiWorkspace(m_max, tol)

    def _exp(self, apply, v: np.ndarray, dt: float) -> np.ndarray:
        result, _ = arnoldi_exp(apply, v, dt, self.m_max, self.tol, self.workspace)
        return result

    def step(self, wf: WaveFunction, t: float) -> Tuple[WaveFunction, FrozenCoupling]:
        """Advance wf from t to t + dt; also returns the snapshot taken at t"""
        fc = freeze(self.system, wf, t)
        return self.step_frozen(fc, wf), fc

    def step_frozen(self, fc: FrozenCoupling, wf: WaveFunction) -> WaveFunction:
        dt = self.dt
        shape = fc.orbitals.shape
        if self.splitting == "sequential":
            orbitals = self._exp(apply_g_flat(fc), fc.orbitals.ravel(), dt).reshape(shape)
            ci = self._exp(fc.hamiltonian.sigma, wf.ci, dt)
        else:
            ci = self._exp(fc.hamiltonian.sigma, wf.ci, 0.5 * dt)
            orbitals = self._exp(apply_g_flat(fc), fc.orbitals.ravel(), dt).reshape(shape)
            later = CiHamiltonian(wf.space, self.system.integrals(orbitals, fc.time + dt))
            ci = self._exp(later.sigma, ci, 0.5 * dt)
        return WaveFunction(orbitals, ci, wf.space)
