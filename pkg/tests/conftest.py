import math

import numpy as np
import pytest

from qnlab.pic import ParticleEnsemble
from qnlab.torus import ScalarField, TorusGrid

TWO_PI = 2 * math.pi


@pytest.fixture(scope="session")
def g64():
    return TorusGrid(64)


@pytest.fixture(scope="session")
def g32():
    return TorusGrid(32)


def lattice(n: int, q: int) -> np.ndarray:
    """q*q points per cell on the centred sub-lattice."""
    s = (np.arange(n * q) + 0.5) / (n * q) - 0.5
    x1, x2 = np.meshgrid(s, s, indexing="ij")
    return np.column_stack([x1.ravel(), x2.ravel()])


def uniform_ensemble(n: int, q: int, velocity=(0.0, 0.0)) -> ParticleEnsemble:
    pos = lattice(n, q)
    vel = np.broadcast_to(np.asarray(velocity, dtype=float), pos.shape)
    return ParticleEnsemble.from_arrays(pos, vel)


def field(grid, fn) -> ScalarField:
    return ScalarField.from_function(grid, fn)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.call_report = rep


@pytest.fixture
def criterion(request):
    """Collects a one-line verdict for an acceptance criterion and prints it after the test."""
    note = {"number": None, "title": "", "detail": ""}
    yield note
    rep = getattr(request.node, "call_report", None)
    verdict = "PASS" if rep is not None and rep.passed else "FAIL"
    line = f"criterion {note['number']} [{verdict}] {note['title']}: {note['detail']}"
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.ensure_newline()
        tr.write_line(line)
    else:
        print(line)
