import logging
import os
from contextlib import contextmanager
from dataclasses import replace
from typing import List, Optional

import numpy as np

from ci.hamiltonian import CiHamiltonian, ground_state
from config.run_config import RunConfig
from eom.coupling import freeze
from eom.system import ElectronicSystem
from eom.wavefunction import WaveFunction
from errors import NonFinite, StageError, TooFewSamples
from fem.operators import SparseOperator, assemble_one_body, coulomb_target, generalized_eigenpairs
from fem.space import build_space
from field.pulse import write_field_samples
from grid.mesh import build_uniform
from grid.mesh_export import dump_text, export_vtk
from grid.refinement import refine_adapt
from krylov.imaginary_time import propagate_imaginary
from systems.checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from systems.debug_system import DebugSystem
from systems.event_system import EventSystem, SimEvent
from systems.observables import ObservableRecord, ObservableWriter, observables_step
from systems.propagation import KrylovStatistics, RealTimePropagator
from systems.spectrum import hhg_spectrum, write_spectrum
from systems.stage_manager import Stage, StageManager
from systems.worker_pool import WorkerPool

logger = logging.getLogger(__name__)


class Simulation:
    """Runs the pipeline of one configuration inside a run directory"""

    def __init__(
        self,
        config: RunConfig,
        run_dir: Optional[str] = None,
        configure_logging: bool = True,
        log_level: int = logging.INFO,
    ):
        self.config = config
        self.run_dir = run_dir or os.path.join(config.output.directory, config.name)
        self.configure_logging = configure_logging
        self.log_level = log_level
        self.stage_manager = StageManager()
        self.event_system = EventSystem()
        self.debug = DebugSystem()
        self.statistics = KrylovStatistics()

        self.mesh = None
        self.space = None
        self.system: Optional[ElectronicSystem] = None
        self.wavefunction: Optional[WaveFunction] = None
        self.initial: Optional[WaveFunction] = None
        self.records: List[ObservableRecord] = []
        self.imaginary_energies: List[float] = []
        self.regularizations = 0
        self.spectrum_path: Optional[str] = None

        self.event_system.subscribe(SimEvent.STAGE_CHANGED, self._on_stage_changed)
        self.event_system.subscribe(SimEvent.DENSITY_REGULARIZED, self._on_density_regularized)
        self.event_system.subscribe(SimEvent.SOLVER_ITERATIONS, self._on_solver_iterations)

    # -- event handlers ------------------------------------------------

    def _on_stage_changed(self, event_data):
        new_stage = event_data.data.get("new_stage")
        logger.info("Stage %s", new_stage.label)
        self.debug.dump_watches()

    def _on_density_regularized(self, event_data):
        self.regularizations += 1

    def _on_solver_iterations(self, event_data):
        logger.debug("%s solve: %s iterations", event_data.data.get("solver"), event_data.data.get("iterations"))

    @contextmanager
    def stage(self, stage: Stage):
        """Enter a stage; any failure inside is re-raised naming it"""
        self.stage_manager.set_stage(stage)
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            logger.error("Stage %s failed: %s", stage.label, e)
            raise StageError(stage.label, e) from e

    def path(self, name: str) -> str:
        return os.path.join(self.run_dir, name)

    # -- pipeline ------------------------------------------------------

    def prepare(self):
        """VALIDATE: check the config, create the run directory, set up logging and threads"""
        with self.stage(Stage.VALIDATE):
            self.config.validate()
            os.makedirs(self.run_dir, exist_ok=True)
            if self.configure_logging:
                self.debug.configure(self.run_dir, self.log_level)
            with open(self.path("config.json"), "w") as f:
                f.write(self.config.text)
            WorkerPool().configure(self.config.parallel.threads, self.config.parallel.deterministic)
            logger.info("Run %s in %s (config %s)", self.config.name, self.run_dir, self.config.hash[:12])

    def build_mesh(self):
        config = self.config
        with self.stage(Stage.MESH):
            self.mesh = build_uniform(config.box, config.coarse_size)
        with self.stage(Stage.REFINE):
            if config.refine:
                self.mesh = refine_adapt(self.mesh, coulomb_target(config.nuclei), config.refinement)
            self.debug.add_watch("leaves", lambda: self.mesh.n_leaves)
            self.debug.add_watch("cell sizes", lambda: self.mesh.distinct_sizes())
            dump_text(self.mesh, self.path("mesh.txt"))

    def build_system(self):
        config = self.config
        with self.stage(Stage.SPACE):
            self.space = build_space(self.mesh, config.order, config.ecs)
            self.debug.add_watch("free dofs", lambda: self.space.n_free)
        with self.stage(Stage.OPERATORS):
            nuclei = config.nuclei
            if nuclei.softening == 0.0:
                nuclei = nuclei.snapped(self.space.node_coords)
            self.nuclei = nuclei
            operators = assemble_one_body(self.space, nuclei)
            self.system = ElectronicSystem(
                space=self.space,
                operators=operators,
                determinants=config.determinant_space(),
                interaction=config.interaction,
                pulse=config.pulse,
                mass_rtol=config.tolerances.mass,
                poisson_rtol=config.tolerances.poisson,
            )

    def build(self) -> "Simulation":
        self.prepare()
        self.build_mesh()
        self.build_system()
        return self

    def initial_guess(self) -> WaveFunction:
        """Lowest theta=0 one-body eigenvectors and the CI ground state over them"""
        system = self.system
        reference = assemble_one_body(self.space, self.nuclei, use_ecs=False)
        h = SparseOperator(reference.kinetic.matrix + reference.potential.matrix, "hermitian")
        values, vectors = generalized_eigenpairs(h, system.mass, system.n_orbitals)
        logger.info("One-body guess energies: %s", np.array2string(np.asarray(values), precision=6))
        orbitals = np.asarray(vectors, dtype=complex).T
        ham = CiHamiltonian(system.determinants, system.integrals(orbitals, 0.0))
        _, ci = ground_state(ham)
        return WaveFunction(orbitals, ci, system.determinants)

    def relax(self):
        """GROUND_STATE: initial guess, then imaginary-time relaxation"""
        settings = self.config.imaginary_time
        with self.stage(Stage.GROUND_STATE):
            wf = self.initial_guess()
            if settings.max_steps > 0:
                result = propagate_imaginary(
                    wf,
                    self.system,
                    settings.dt,
                    self.config.tolerances.imaginary_energy,
                    max_steps=settings.max_steps,
                    m_max=self.config.propagation.m_max,
                    tol=self.config.tolerances.arnoldi,
                    strict=settings.strict,
                )
                wf = result.wavefunction
                self.imaginary_energies = result.energies
            else:
                self.imaginary_energies = [freeze(self.system, wf, 0.0).energy.real]
            np.savetxt(
                self.path("imaginary_energy.txt"),
                np.column_stack([np.arange(len(self.imaginary_energies)), self.imaginary_energies]),
                fmt=["%d", "%.16e"],
                header="step E[hartree]",
            )
            logger.info("Ground state energy %.12f hartree", self.imaginary_energies[-1])
            self.wavefunction = wf
            self.initial = wf.copy()

    def propagate(self, start: int = 0):
        """PROPAGATION: real-time loop with observables and checkpoints"""
        config = self.config
        settings = config.propagation
        cadence = config.output.cadence
        checkpoint_cadence = config.output.checkpoint_cadence
        resumed = start > 0

        with self.stage(Stage.PROPAGATION):
            writer = ObservableWriter(self.run_dir, self.space.dimension, append=resumed)
            if resumed:
                writer.rewrite(self.records)
            if config.pulse is not None and config.output.field_samples:
                times = settings.dt * np.arange(settings.steps + 1)
                write_field_samples(config.pulse, times, self.path("field.txt"))

            propagator = RealTimePropagator(
                self.system, settings.dt, settings.m_max, config.tolerances.arnoldi, settings.splitting
            )
            self.statistics.attach()
            try:
                wf = self.wavefunction
                for step in range(start, settings.steps + 1):
                    t = step * settings.dt
                    fc = freeze(self.system, wf, t, config.tolerances.density_cutoff)
                    fresh = not (resumed and step == start)
                    if fresh and step % cadence == 0:
                        record = observables_step(wf, fc, t, self.initial)
                        self.records.append(record)
                        writer.write(record)
                    if fresh and checkpoint_cadence and step % checkpoint_cadence == 0 and step > 0:
                        self.checkpoint(step, t, wf)
                    if step == settings.steps:
                        break
                    wf = propagator.step_frozen(fc, wf)
                    if not (np.all(np.isfinite(wf.ci)) and np.all(np.isfinite(wf.orbitals))):
                        raise NonFinite(f"Wavefunction became non-finite at step {step + 1}")
                    self.wavefunction = wf
            finally:
                self.statistics.detach()
            logger.info(
                "Propagated %d steps; %d records, %d density regularization(s)",
                settings.steps - start,
                len(self.records),
                self.regularizations,
            )

    def checkpoint(self, step: int, t: float, wf: WaveFunction) -> str:
        return write_checkpoint(
            self.run_dir,
            Checkpoint(
                step=step,
                time=t,
                orbitals=wf.orbitals,
                ci=wf.ci,
                initial_orbitals=self.initial.orbitals,
                initial_ci=self.initial.ci,
                records=np.array([r.row() for r in self.records]),
                config_text=self.config.text,
                config_hash=self.config.hash,
            ),
        )

    def spectrum(self):
        """SPECTRUM: harmonic spectrum of the recorded dipole"""
        settings = self.config.spectrum
        with self.stage(Stage.SPECTRUM):
            times = np.array([r.t for r in self.records])
            dipole = np.array([r.dipole for r in self.records])
            try:
                omega, intensity = hhg_spectrum(times, dipole, settings.window, settings.quantity)
            except TooFewSamples as e:
                logger.warning("No spectrum written: %s", e)
                return
            omega0 = self.config.pulse.omega if self.config.pulse is not None else None
            self.spectrum_path = self.path("spectrum.txt")
            write_spectrum(omega, intensity, self.spectrum_path, omega0)

    def finish(self):
        with self.stage(Stage.DONE):
            if self.statistics.steps:
                logger.info(self.statistics.summary())
            self.debug.remove_watch("leaves")
            self.debug.remove_watch("cell sizes")
            self.debug.remove_watch("free dofs")

    def run(self) -> "Simulation":
        """mesh -> refine -> space -> ground state -> real time -> spectrum"""
        try:
            self.build()
            self.relax()
            self.propagate()
            self.spectrum()
            self.finish()
        finally:
            self.close()
        return self

    def close(self):
        self.event_system.unsubscribe(SimEvent.STAGE_CHANGED, self._on_stage_changed)
        self.event_system.unsubscribe(SimEvent.DENSITY_REGULARIZED, self._on_density_regularized)
        self.event_system.unsubscribe(SimEvent.SOLVER_ITERATIONS, self._on_solver_iterations)
        if self.configure_logging:
            self.debug.reset_handlers()

    @classmethod
    def resume(
        cls,
        checkpoint_path: str,
        steps: Optional[int] = None,
        configure_logging: bool = True,
        log_level: int = logging.INFO,
    ) -> "Simulation":
        """Continue a run from a checkpoint inside its run directory"""
        run_dir = os.path.dirname(os.path.dirname(os.path.abspath(checkpoint_path)))
        with open(os.path.join(run_dir, "config.json")) as f:
            text = f.read()
        config = RunConfig.from_text(text, name=os.path.basename(run_dir))
        checkpoint = read_checkpoint(checkpoint_path, config.hash)
        if steps is not None:
            # Extending a run keeps the recorded config so later checkpoints still match
            config = replace(config, propagation=replace(config.propagation, steps=int(steps)))

        sim = cls(config, run_dir, configure_logging, log_level)
        try:
            sim.build()
            space = sim.system.determinants
            sim.wavefunction = WaveFunction(checkpoint.orbitals, checkpoint.ci, space)
            sim.initial = WaveFunction(checkpoint.initial_orbitals, checkpoint.initial_ci, space)
            rows = np.atleast_2d(checkpoint.records) if checkpoint.records.size else []
            sim.records = [ObservableRecord.from_row(row, sim.space.dimension) for row in rows]
            logger.info("Resuming at step %d (t=%.4f) from %s", checkpoint.step, checkpoint.time, checkpoint_path)
            sim.propagate(start=checkpoint.step)
            sim.spectrum()
            sim.finish()
        finally:
            sim.close()
        return sim


def mesh_dump(config: RunConfig, run_dir: Optional[str] = None, log_level: int = logging.INFO) -> Simulation:
    """Build and refine the mesh, classify its cells and write mesh.txt / mesh.vtk"""
    sim = Simulation(config, run_dir, log_level=log_level)
    try:
        sim.prepare()
        sim.build_mesh()
        with sim.stage(Stage.SPACE):
            sim.space = build_space(sim.mesh, config.order, config.ecs)
            export_vtk(sim.mesh, sim.path("mesh.vtk"), sim.space.regions)
        with sim.stage(Stage.DONE):
            logger.info(
                "Mesh: %d leaves, %d levels, sizes %s",
                sim.mesh.n_leaves,
                sim.mesh.max_level + 1,
                sim.mesh.distinct_sizes(),
            )
    finally:
        sim.close()
    return sim
