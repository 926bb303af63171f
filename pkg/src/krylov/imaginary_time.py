import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ci.hamiltonian import CiHamiltonian
from eom.coupling import freeze
from eom.equations import apply_g_flat
from eom.system import ElectronicSystem
from eom.wavefunction import WaveFunction, lowdin
from errors import NoConvergence
from krylov.arnoldi import ArnoldiWorkspace, arnoldi_exp
from systems.event_system import EventSystem, SimEvent

logger = logging.getLogger(__name__)


@dataclass
class ImaginaryTimeResult:
    wavefunction: WaveFunction
    energies: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def steps(self) -> int:
        return max(0, len(self.energies) - 1)

    @property
    def energy(self) -> float:
        return self.energies[-1]


def propagate_imaginary(
    wf: WaveFunction,
    system: ElectronicSystem,
    dt_imag: float,
    tol_energy: float,
    max_steps: int = 1000,
    m_max: int = 15,
    tol: float = 1e-10,
    strict: bool = True,
) -> ImaginaryTimeResult:
    """Relax orbitals and CI coefficients under exp(-H tau).

    Each step propagates the orbitals with the frozen G, re-orthonormalizes
    them (Lowdin), propagates C with integrals of the new orbitals and
    renormalizes. Stops once consecutive energies differ by less than
    tol_energy.
    """
    if dt_imag <= 0:
        raise ValueError("Imaginary time step must be positive")
    events = EventSystem()
    workspace = ArnoldiWorkspace(m_max, tol)
    dt = -1j * dt_imag
    mass = system.mass.matrix

    wf = WaveFunction(lowdin(wf.orbitals, mass), wf.ci / np.linalg.norm(wf.ci), wf.space)
    fc = freeze(system, wf, 0.0)
    result = ImaginaryTimeResult(wavefunction=wf, energies=[fc.energy.real])
    logger.info("Imaginary time: initial energy %.12f", result.energy)

    for step in range(1, max_steps + 1):
        moved, _ = arnoldi_exp(apply_g_flat(fc), fc.orbitals.ravel(), dt, m_max, tol, workspace)
        orbitals = lowdin(moved.reshape(fc.orbitals.shape), mass)

        ham = CiHamiltonian(wf.space, system.integrals(orbitals, 0.0))
        ci, _ = arnoldi_exp(ham.sigma, wf.ci, dt, m_max, tol, workspace)
        ci = ci / np.linalg.norm(ci)

        wf = WaveFunction(orbitals, ci, wf.space)
        fc = freeze(system, wf, 0.0)
        energy = fc.energy.real
        change = energy - result.energy
        result.energies.append(energy)
        result.wavefunction = wf
        events.emit(SimEvent.IMAGINARY_STEP, step=step, energy=energy, change=change)
        logger.debug("Imaginary step %d: E = %.12f (dE = %.3e)", step, energy, change)
        if abs(change) < tol_energy:
            result.converged = True
            logger.info("Imaginary time converged after %d steps: E = %.12f", step, energy)
            return result

    message = f"Imaginary time did not reach |dE| < {tol_energy:g} in {max_steps} steps"
    if strict:
        raise NoConvergence(message, iterations=max_steps)
    logger.warning("%s; continuing with E = %.12f", message, result.energy)
    return result
