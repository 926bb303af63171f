import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from ci.determinants import DeterminantSpace
from config.defaults import (
    DEFAULT_IMAGINARY_TIME,
    DEFAULT_OUTPUT,
    DEFAULT_PARALLEL,
    DEFAULT_PROPAGATION,
    DEFAULT_REFINEMENT,
    DEFAULT_SPECTRUM,
    DEFAULT_TOLERANCES,
)
from errors import ConfigError
from fem.operators import Nuclei
from fem.space import EcsConfig
from field.pulse import Pulse
from grid.mesh import GEOMETRY_TOL, SimulationBox
from grid.refinement import RefinementPolicy
from meanfield.table import Interaction
from systems.asset_manager import AssetManager
from systems.checkpoint import config_hash
from systems.propagation import SPLITTINGS
from systems.spectrum import QUANTITIES, WINDOWS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tolerances:
    arnoldi: float
    mass: float
    poisson: float
    imaginary_energy: float
    density_cutoff: float


@dataclass(frozen=True)
class PropagationConfig:
    dt: float
    steps: int
    m_max: int
    splitting: str


@dataclass(frozen=True)
class ImaginaryTimeConfig:
    dt: float
    max_steps: int
    strict: bool


@dataclass(frozen=True)
class OutputConfig:
    directory: str
    cadence: int
    checkpoint_cadence: int
    field_samples: bool


@dataclass(frozen=True)
class SpectrumConfig:
    window: str
    quantity: str


@dataclass(frozen=True)
class ParallelConfig:
    threads: int
    deterministic: bool
    max_determinants: int


@dataclass(frozen=True)
class RunConfig:
    name: str
    box: SimulationBox
    coarse_size: float
    order: int
    refine: bool
    refinement: RefinementPolicy
    nuclei: Nuclei
    interaction: Interaction
    n_alpha: int
    n_beta: int
    n_orbitals: int
    ecs: Optional[EcsConfig]
    pulse: Optional[Pulse]
    propagation: PropagationConfig
    imaginary_time: ImaginaryTimeConfig
    tolerances: Tolerances
    output: OutputConfig
    spectrum: SpectrumConfig
    parallel: ParallelConfig
    text: str = field(default="", repr=False, compare=False)

    @property
    def dimension(self) -> int:
        return self.box.dimension

    @property
    def hash(self) -> str:
        return config_hash(self.text)

    @classmethod
    def from_text(cls, text: str, name: str = "run") -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config is not valid JSON: {e}") from e
        return cls.from_dict(data, text=text, name=name)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], text: Optional[str] = None, name: str = "run") -> "RunConfig":
        """Build the frozen config; missing optional sections use the DEFAULT_* tables"""
        if text is None:
            text = json.dumps(data, indent=2, sort_keys=True)
        try:
            return cls._build(data, text, name)
        except ConfigError:
            raise
        except KeyError as e:
            raise ConfigError(f"Missing config key {e}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def _build(cls, data: Dict[str, Any], text: str, name: str) -> "RunConfig":
        box = data["box"]
        basis = data.get("basis", {})
        refinement = {**DEFAULT_REFINEMENT, **data.get("refinement", {})}
        nuclei = data.get("nuclei", {})
        interaction = data.get("interaction", {})
        electrons = data["electrons"]
        ecs = data.get("ecs")
        pulse = data.get("pulse")

        coarse = float(box["coarse_size"])
        return cls(
            name=str(data.get("name", name)),
            box=SimulationBox(tuple(box["lo"]), tuple(box["hi"])),
            coarse_size=coarse,
            order=int(basis.get("order", 1)),
            refine=bool(refinement["enabled"]),
            refinement=RefinementPolicy(
                threshold=float(refinement.get("threshold", 0.005)),
                min_size=float(refinement.get("min_size", coarse)),
                max_size=float(refinement.get("max_size", coarse)),
                max_passes=int(refinement["max_passes"]),
                order=int(refinement["order"]),
                max_leaves=refinement["max_leaves"],
            ),
            nuclei=Nuclei(
                charges=tuple(nuclei.get("charges", ())),
                positions=tuple(tuple(p) for p in nuclei.get("positions", ())),
                softening=float(nuclei.get("softening", 0.0)),
            ),
            interaction=Interaction(
                kind=str(interaction.get("kind", "coulomb")),
                softening=float(interaction.get("softening", 0.0)),
            ),
            n_alpha=int(electrons["n_alpha"]),
            n_beta=int(electrons["n_beta"]),
            n_orbitals=int(electrons["n_orbitals"]),
            ecs=None if ecs is None else EcsConfig(r0=tuple(ecs["r0"]), theta=float(ecs["theta"])),
            pulse=None if pulse is None else _build_pulse(pulse),
            propagation=PropagationConfig(**{**DEFAULT_PROPAGATION, **data.get("propagation", {})}),
            imaginary_time=ImaginaryTimeConfig(**{**DEFAULT_IMAGINARY_TIME, **data.get("imaginary_time", {})}),
            tolerances=Tolerances(**{**DEFAULT_TOLERANCES, **data.get("tolerances", {})}),
            output=OutputConfig(**{**DEFAULT_OUTPUT, **data.get("output", {})}),
            spectrum=SpectrumConfig(**{**DEFAULT_SPECTRUM, **data.get("spectrum", {})}),
            parallel=ParallelConfig(**{**DEFAULT_PARALLEL, **data.get("parallel", {})}),
            text=text,
        )

    def with_overrides(
        self,
        steps: Optional[int] = None,
        imaginary_steps: Optional[int] = None,
        output: Optional[str] = None,
        threads: Optional[int] = None,
    ) -> "RunConfig":
        """CLI overrides; the recorded text keeps them so checkpoints hash the effective run"""
        config = self
        data = json.loads(self.text) if self.text else {}
        if steps is not None:
            config = replace(config, propagation=replace(config.propagation, steps=int(steps)))
            data.setdefault("propagation", {})["steps"] = int(steps)
        if imaginary_steps is not None:
            # A shortened relaxation is a smoke run: report non-convergence instead of failing
            config = replace(
                config,
                imaginary_time=replace(config.imaginary_time, max_steps=int(imaginary_steps), strict=False),
            )
            section = data.setdefault("imaginary_time", {})
            section["max_steps"] = int(imaginary_steps)
            section["strict"] = False
        if output is not None:
            config = replace(config, output=replace(config.output, directory=output))
        if threads is not None:
            config = replace(config, parallel=replace(config.parallel, threads=int(threads)))
        if steps is None and imaginary_steps is None:
            return config
        return replace(config, text=json.dumps(data, indent=2))

    def validate(self) -> "RunConfig":
        """Cross-reference checks that must pass before anything is allocated"""
        d = self.dimension
        extent = np.asarray(self.box.hi) - np.asarray(self.box.lo)
        counts = extent / self.coarse_size
        if self.coarse_size <= 0 or np.any(np.abs(counts - np.round(counts)) > GEOMETRY_TOL * np.maximum(1.0, counts)):
            raise ConfigError(f"Box extents {tuple(extent)} are not multiples of coarse_size {self.coarse_size}")
        if self.order < 1:
            raise ConfigError("Polynomial order must be at least 1")
        if self.refinement.max_size > self.coarse_size * (1 + GEOMETRY_TOL):
            raise ConfigError("refinement.max_size may not exceed coarse_size")

        if self.n_alpha < 0 or self.n_beta < 0 or self.n_alpha + self.n_beta == 0:
            raise ConfigError("Need at least one electron")
        if self.n_orbitals < max(self.n_alpha, self.n_beta):
            raise ConfigError(
                f"{self.n_orbitals} orbitals cannot hold {max(self.n_alpha, self.n_beta)} electrons of one spin"
            )
        n_det = math.comb(self.n_orbitals, self.n_alpha) * math.comb(self.n_orbitals, self.n_beta)
        if n_det > self.parallel.max_determinants:
            raise ConfigError(f"{n_det} determinants exceed the cap {self.parallel.max_determinants}")

        if self.nuclei.dimension not in (None, d):
            raise ConfigError(f"Nuclear positions are {self.nuclei.dimension}-dimensional, box is {d}-dimensional")
        try:
            self.nuclei.check_inside(self.box)
            self.interaction.check_dimension(d)
        except ValueError as e:
            raise ConfigError(str(e)) from e

        if self.ecs is not None:
            self._validate_ecs()
        if self.pulse is not None and self.pulse.dimension != d:
            raise ConfigError(f"Pulse polarization is {self.pulse.dimension}-dimensional, box is {d}-dimensional")

        if self.propagation.dt <= 0 or self.imaginary_time.dt <= 0:
            raise ConfigError("Time steps must be positive")
        if self.propagation.steps < 0 or self.imaginary_time.max_steps < 0:
            raise ConfigError("Step counts must be non-negative")
        if self.propagation.m_max < 1:
            raise ConfigError("propagation.m_max must be at least 1")
        if self.propagation.splitting not in SPLITTINGS:
            raise ConfigError(f"Unknown splitting {self.propagation.splitting!r}")
        if self.output.cadence < 1:
            raise ConfigError("output.cadence must be at least 1")
        if self.output.checkpoint_cadence < 0:
            raise ConfigError("output.checkpoint_cadence must be non-negative (0 disables checkpoints)")
        if self.spectrum.window not in WINDOWS or self.spectrum.quantity not in QUANTITIES:
            raise ConfigError(f"Spectrum needs window in {WINDOWS} and quantity in {QUANTITIES}")
        if self.parallel.threads < 1:
            raise ConfigError("parallel.threads must be at least 1")
        if any(t <= 0 for t in vars(self.tolerances).values()):
            raise ConfigError("Tolerances must be positive")
        logger.info("Config %s validated: %dD, %d determinants", self.name, d, n_det)
        return self

    def _validate_ecs(self):
        r0 = np.asarray(self.ecs.r0)
        lo, hi = np.asarray(self.box.lo), np.asarray(self.box.hi)
        if len(r0) != self.dimension:
            raise ConfigError(f"ECS r0 has {len(r0)} components for a {self.dimension}D box")
        if np.any(r0 >= hi - GEOMETRY_TOL) or np.any(-r0 <= lo + GEOMETRY_TOL):
            raise ConfigError(f"ECS half-widths {tuple(r0)} must lie strictly inside the box")
        # Surfaces on coarse cell faces never cut a leaf, whatever refinement does
        for plane in np.concatenate([r0 - lo, -r0 - lo]):
            ratio = plane / self.coarse_size
            if abs(ratio - round(ratio)) > GEOMETRY_TOL * max(1.0, ratio):
                raise ConfigError(
                    f"ECS surface at offset {plane:g} from the box corner is not on a coarse cell face"
                )

    def determinant_space(self) -> DeterminantSpace:
        return DeterminantSpace(self.n_alpha, self.n_beta, self.n_orbitals)


def _build_pulse(section: Dict[str, Any]) -> Pulse:
    section = copy.deepcopy(section)
    polarization = tuple(section.pop("polarization", (1.0,)))
    n_cycles = float(section.pop("n_cycles", 2.0))
    envelope = str(section.pop("envelope", "triangular"))
    if "omega" in section:
        return Pulse.from_atomic_units(
            omega=float(section["omega"]),
            e0=float(section["e0"]),
            n_cycles=n_cycles,
            polarization=polarization,
            envelope=envelope,
        )
    return Pulse(
        wavelength_nm=float(section["wavelength_nm"]),
        peak_intensity_wcm2=float(section["peak_intensity_wcm2"]),
        n_cycles=n_cycles,
        polarization=polarization,
        envelope=envelope,
    )


def load_config(name_or_path: str) -> RunConfig:
    """Read a shipped config name or a path through the AssetManager"""
    path, text = AssetManager().get_config_text(name_or_path)
    name = os.path.splitext(os.path.basename(path))[0]
    return RunConfig.from_text(text, name=name)
