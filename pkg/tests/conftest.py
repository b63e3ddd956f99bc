import numpy as np
import pytest

from schwarz_coupler.assembly import assemble_system
from schwarz_coupler.geometry import Partition1D
from schwarz_coupler.kernel import KernelSpec
from schwarz_coupler.schwarz import SchwarzConfig, run_monolithic, run_schwarz


def fig2_source(x):
    return (1.0 - np.asarray(x)) ** 4


@pytest.fixture(scope="session")
def hat05():
    return KernelSpec.hat(0.5)


@pytest.fixture(scope="session")
def fig2_partition():
    return Partition1D([(0.0, 1.0)], [(-1.0, 0.0)], 0.5)


@pytest.fixture(scope="session")
def fig2_system(fig2_partition, hat05):
    return assemble_system(fig2_partition, hat05, fig2_source, target_h=0.02)


@pytest.fixture(scope="session")
def fig2_lumped(fig2_partition, hat05):
    return assemble_system(fig2_partition, hat05, fig2_source, target_h=0.02, lumped=True)


@pytest.fixture(scope="session")
def fig2_mono(fig2_system):
    return run_monolithic(fig2_system)


@pytest.fixture(scope="session")
def fig2_run(fig2_system):
    cfg = SchwarzConfig(tol=1e-12, reference="monolithic", store_iterates=True)
    return run_schwarz(fig2_system, cfg)


@pytest.fixture(scope="session")
def coarse_system(fig2_partition, hat05):
    return assemble_system(fig2_partition, hat05, fig2_source, target_h=0.25)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
