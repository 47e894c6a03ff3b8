import time

import numpy as np
import pytest

from lpv_rci import presets
from lpv_rci.datamatrices import build
from lpv_rci.synthesis import SynthesisConfig, synthesize

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    return pytestconfig.stash[ACCEPTANCE]


@pytest.fixture(scope="session")
def setup():
    return presets.load_setup()


@pytest.fixture(scope="session")
def traj20(setup):
    return setup.collect(T=20, seed=0)


@pytest.fixture(scope="session")
def dm20(traj20, setup):
    return build(traj20, setup.constraints)


def _run(setup, dm, nc):
    cfg = SynthesisConfig(C=setup.C(nc), constraints=setup.constraints, max_iters=5,
                          rel_vol_tol=0.0)
    t0 = time.perf_counter()
    res = synthesize(dm, cfg)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def synth3(setup, dm20):
    """Five iterations with n_c = 3 on the T = 20 data set, with wall time."""
    return _run(setup, dm20, 3)


@pytest.fixture(scope="session")
def synth2(setup, dm20):
    return _run(setup, dm20, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
