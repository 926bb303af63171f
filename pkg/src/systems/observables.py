import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ci.overlap import overlap
from eom.coupling import FrozenCoupling
from eom.equations import total_energy
from eom.wavefunction import WaveFunction
from systems.event_system import EventSystem, SimEvent

logger = logging.getLogger(__name__)

AXES = "xyz"
NUMBER_FORMAT = "%.16e"


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    norm: float
    energy_re: float
    energy_im: float
    dipole: np.ndarray
    velocity: np.ndarray
    survival: float

    def row(self) -> np.ndarray:
        return np.concatenate(
            [[self.t, self.norm, self.energy_re, self.energy_im], self.dipole, self.velocity, [self.survival]]
        )

    @classmethod
    def from_row(cls, row: Sequence[float], dimension: int) -> "ObservableRecord":
        row = np.asarray(row, dtype=float)
        return cls(
            t=float(row[0]),
            norm=float(row[1]),
            energy_re=float(row[2]),
            energy_im=float(row[3]),
            dipole=row[4 : 4 + dimension].copy(),
            velocity=row[4 + dimension : 4 + 2 * dimension].copy(),
            survival=float(row[4 + 2 * dimension]),
        )


def one_body_expectation(fc: FrozenCoupling, matrix) -> complex:
    """sum_pq D[p, q] <phi_q|o|phi_p> for the normalized snapshot"""
    o = np.conj(fc.orbitals) @ (matrix @ fc.orbitals.T)
    return complex(np.einsum("pq,qp->", fc.rdms.one, o))


def observables_step(
    wf: WaveFunction,
    fc: FrozenCoupling,
    t: float,
    initial: Optional[WaveFunction] = None,
) -> ObservableRecord:
    """Expectation values of one snapshot.

    The density matrices in fc belong to the normalized CI vector, so the
    dipole and velocity are scaled by |C|^2 to follow the absorbed norm.
    """
    system = fc.system
    weight = float(np.vdot(wf.ci, wf.ci).real)
    n_electrons = float(np.trace(fc.rdms.one).real)

    dipole = np.array([one_body_expectation(fc, r.matrix).real for r in system.positions])
    momentum = np.array([(-1j * one_body_expectation(fc, g.matrix)).real for g in system.operators.gradient])
    velocity = momentum + np.asarray(fc.vector_potential, dtype=float) * n_electrons

    survival = 1.0
    if initial is not None:
        amplitude = overlap(wf.space, initial.orbitals, initial.ci, wf.orbitals, wf.ci, system.mass.matrix)
        survival = float(abs(amplitude) ** 2)

    energy = total_energy(fc)
    record = ObservableRecord(
        t=float(t),
        norm=float(np.sqrt(weight)),
        energy_re=float(energy.real),
        energy_im=float(energy.imag),
        dipole=weight * dipole,
        velocity=weight * velocity,
        survival=survival,
    )
    EventSystem().emit(SimEvent.OBSERVABLE_RECORDED, record=record)
    return record


def observables_header(dimension: int) -> str:
    axes = AXES[:dimension]
    columns = ["t[a.u.]", "norm", "ReE[hartree]", "ImE[hartree]"]
    columns += [f"d_{a}[bohr]" for a in axes]
    columns += [f"v_{a}[a.u.]" for a in axes]
    columns.append("survival")
    return " ".join(columns)


def dipole_header(dimension: int) -> str:
    return " ".join(["t[a.u.]"] + [f"d_{a}[bohr]" for a in AXES[:dimension]])


class ObservableWriter:
    """Appends records to observables.txt and dipole.txt in a run directory"""

    def __init__(self, run_dir: str, dimension: int, append: bool = False):
        self.dimension = dimension
        self.observables_path = os.path.join(run_dir, "observables.txt")
        self.dipole_path = os.path.join(run_dir, "dipole.txt")
        if not append:
            self.reset()

    def reset(self):
        for path, header in (
            (self.observables_path, observables_header(self.dimension)),
            (self.dipole_path, dipole_header(self.dimension)),
        ):
            with open(path, "w") as f:
                f.write(f"# {header}\n")

    def write(self, record: ObservableRecord):
        with open(self.observables_path, "a") as f:
            np.savetxt(f, record.row()[None, :], fmt=NUMBER_FORMAT)
        with open(self.dipole_path, "a") as f:
            np.savetxt(f, np.concatenate([[record.t], record.dipole])[None, :], fmt=NUMBER_FORMAT)

    def rewrite(self, records: List[ObservableRecord]):
        """Start both files over with the given records (used on resume)"""
        self.reset()
        for record in records:
            self.write(record)


def load_observables(path: str, dimension: int) -> List[ObservableRecord]:
    data = np.loadtxt(path, ndmin=2)
    return [ObservableRecord.from_row(row, dimension) for row in data]
