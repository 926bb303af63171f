import os
import sys

import numpy as np
import pytest

SRC = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
if SRC not in sys.path:
    sys.path.insert(0, SRC)

from ci.determinants import enumerate_determinants  # noqa: E402
from eom.system import ElectronicSystem  # noqa: E402
from fem.operators import Nuclei, assemble_one_body  # noqa: E402
from fem.space import EcsConfig, build_space  # noqa: E402
from grid.mesh import SimulationBox, build_uniform  # noqa: E402
from meanfield.table import Interaction  # noqa: E402
from systems.asset_manager import AssetManager  # noqa: E402
from systems.debug_system import DebugSystem  # noqa: E402
from systems.event_system import EventSystem  # noqa: E402
from systems.worker_pool import THREADS_ENV, WorkerPool  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance reproduction")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fresh_singletons(monkeypatch):
    """Every test starts with new service singletons and one worker thread"""
    monkeypatch.delenv(THREADS_ENV, raising=False)
    yield
    if WorkerPool._instance is not None:
        WorkerPool._instance.shutdown()
    if DebugSystem._instance is not None:
        DebugSystem._instance.reset_handlers()
    EventSystem._instance = None
    AssetManager._instance = None
    DebugSystem._instance = None
    WorkerPool._instance = None


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def line_space():
    """Factory for 1D spaces: line_space(lo, hi, coarse, order, ecs=None)"""

    def make(lo, hi, coarse, order, ecs=None):
        mesh = build_uniform(SimulationBox((lo,), (hi,)), coarse)
        return build_space(mesh, order, None if ecs is None else EcsConfig(*ecs))

    return make


@pytest.fixture
def soft_core_system(line_space):
    """Factory for 1D soft-core atoms with both softenings equal to 1.

    soft_core_system(n_alpha, n_beta, n_orbitals, charge=..., half_width=..., coarse=..., order=...)
    """

    def make(n_alpha, n_beta, n_orbitals, charge=2.0, half_width=10.0, coarse=2.0, order=4, ecs=None, pulse=None):
        space = line_space(-half_width, half_width, coarse, order, ecs)
        nuclei = Nuclei(charges=(charge,), positions=((0.0,),), softening=1.0)
        return ElectronicSystem(
            space=space,
            operators=assemble_one_body(space, nuclei),
            determinants=enumerate_determinants(n_alpha, n_beta, n_orbitals),
            interaction=Interaction(kind="soft_core", softening=1.0),
            pulse=pulse,
        )

    return make
