import argparse
import logging
import sys
from typing import List, Optional

from config.run_config import load_config
from errors import ConfigError, SimulationError, StageError
from simulation import Simulation, mesh_dump
from systems.debug_system import DebugSystem
from systems.spectrum import QUANTITIES, WINDOWS, spectrum_from_file

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afem-mctdhf",
        description="MCTDHF electron dynamics on adaptive finite element meshes",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="ground state, real-time propagation and spectrum")
    run.add_argument("config", help="shipped config name or path to a JSON file")
    run.add_argument("--steps", type=int, help="override propagation.steps")
    run.add_argument("--imaginary-steps", type=int, help="override imaginary_time.max_steps (non-strict)")
    run.add_argument("--output", help="parent directory for the run directory")
    run.add_argument("--threads", type=int, help="worker threads (AFEM_THREADS wins)")

    resume = commands.add_parser("resume", help="continue a run from a checkpoint")
    resume.add_argument("checkpoint", help="checkpoints/step_XXXXXXX.npz inside a run directory")
    resume.add_argument("--steps", type=int, help="new total step count")

    spectrum = commands.add_parser("spectrum", help="harmonic spectrum of a dipole.txt file")
    spectrum.add_argument("dipole", help="dipole file: time column then one column per axis")
    spectrum.add_argument("--window", choices=WINDOWS, default="hann")
    spectrum.add_argument("--quantity", choices=QUANTITIES, default="acceleration")
    spectrum.add_argument("--omega0", type=float, help="driving frequency (a.u.) for a harmonic-order column")

    dump = commands.add_parser("mesh-dump", help="write the refined mesh as text and VTK")
    dump.add_argument("config", help="shipped config name or path to a JSON file")
    dump.add_argument("--output", help="parent directory for the run directory")
    return parser


def _execute(args: argparse.Namespace, level: int) -> None:
    if args.command == "run":
        config = load_config(args.config).with_overrides(
            steps=args.steps,
            imaginary_steps=args.imaginary_steps,
            output=args.output,
            threads=args.threads,
        )
        sim = Simulation(config, log_level=level).run()
        logger.info("Run finished: %s", sim.run_dir)
    elif args.command == "resume":
        sim = Simulation.resume(args.checkpoint, steps=args.steps, log_level=level)
        logger.info("Resumed run finished: %s", sim.run_dir)
    elif args.command == "spectrum":
        path = spectrum_from_file(args.dipole, args.window, args.quantity, args.omega0)
        logger.info("Spectrum written to %s", path)
    elif args.command == "mesh-dump":
        config = load_config(args.config).with_overrides(output=args.output)
        sim = mesh_dump(config, log_level=level)
        logger.info("Mesh written to %s", sim.run_dir)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.INFO
    if args.command == "spectrum":
        DebugSystem().configure(level=level)
    else:
        logging.getLogger().setLevel(level)

    try:
        _execute(args, level)
    except StageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG if isinstance(e.cause, ConfigError) else EXIT_RUNTIME
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
