import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from slotdie.core import default_geometry, to_deviation
from slotdie.ident import PrbsSpec, design_prbs
from slotdie.truthplant import TruthPlantConfig, run_experiment, steady_operating_point

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def geometry():
    return default_geometry()


@pytest.fixture(scope="session")
def truth_cfg():
    return TruthPlantConfig()


@pytest.fixture(scope="session")
def truth_experiment(truth_cfg):
    """Default PRBS run on the truth plant: (operating point, absolute log, deviation log)."""
    op = steady_operating_point(truth_cfg)
    q_log = design_prbs(PrbsSpec(), op, 0.01)
    log = run_experiment(truth_cfg, q_log, 0.01)
    return op, log, to_deviation(log, op)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = {}


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines[number] = line
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
