import warnings

import numpy as np
import pytest

from torusgpe.core3d import Grid3D, Model3D
from torusgpe.potentials import PotentialSpec


@pytest.fixture(scope="session")
def model64():
    return Model3D(Grid3D.make(64.0), PotentialSpec("Quadratic", 64.0))


@pytest.fixture(scope="session")
def ground64(model64):
    from torusgpe.minimizer3d import MinimizeConfig, minimize
    g = model64.grid
    return minimize(MinimizeConfig(64.0, 30.0, tol_grad=1e-10), PotentialSpec("Quadratic", 64.0), g, model64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
