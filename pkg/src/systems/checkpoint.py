import hashlib
import logging
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import CheckpointMismatch
from systems.event_system import EventSystem, SimEvent

logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoints"


def config_hash(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    step: int
    time: float
    orbitals: np.ndarray
    ci: np.ndarray
    initial_orbitals: np.ndarray
    initial_ci: np.ndarray
    records: np.ndarray  # observable rows written so far
    config_text: str
    config_hash: str

    def check(self, expected_hash: str) -> None:
        if self.config_hash != expected_hash:
            raise CheckpointMismatch(
                f"Checkpoint at step {self.step} was written by config {self.config_hash[:12]}, "
                f"current config is {expected_hash[:12]}"
            )


def checkpoint_path(run_dir: str, step: int) -> str:
    return os.path.join(run_dir, CHECKPOINT_DIR, f"step_{step:07d}.npz")


def write_checkpoint(run_dir: str, checkpoint: Checkpoint) -> str:
    path = checkpoint_path(run_dir, checkpoint.step)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    np.savez(
        path,
        step=np.int64(checkpoint.step),
        time=np.float64(checkpoint.time),
        orbitals=checkpoint.orbitals,
        ci=checkpoint.ci,
        initial_orbitals=checkpoint.initial_orbitals,
        initial_ci=checkpoint.initial_ci,
        records=checkpoint.records,
        config_text=np.array(checkpoint.config_text),
        config_hash=np.array(checkpoint.config_hash),
    )
    logger.info("Checkpoint step %d written to %s", checkpoint.step, path)
    EventSystem().emit(SimEvent.CHECKPOINT_WRITTEN, step=checkpoint.step, path=path)
    return path


def read_checkpoint(path: str, expected_hash: Optional[str] = None) -> Checkpoint:
    with np.load(path, allow_pickle=False) as data:
        checkpoint = Checkpoint(
            step=int(data["step"]),
            time=float(data["time"]),
            orbitals=data["orbitals"],
            ci=data["ci"],
            initial_orbitals=data["initial_orbitals"],
            initial_ci=data["initial_ci"],
            records=data["records"],
            config_text=str(data["config_text"]),
            config_hash=str(data["config_hash"]),
        )
    if config_hash(checkpoint.config_text) != checkpoint.config_hash:
        raise CheckpointMismatch(f"{path}: stored config does not match its hash")
    if expected_hash is not None:
        checkpoint.check(expected_hash)
    return checkpoint


def latest_checkpoint(run_dir: str) -> Optional[str]:
    folder = os.path.join(run_dir, CHECKPOINT_DIR)
    if not os.path.isdir(folder):
        return None
    names = sorted(f for f in os.listdir(folder) if f.startswith("step_") and f.endswith(".npz"))
    return os.path.join(folder, names[-1]) if names else None
