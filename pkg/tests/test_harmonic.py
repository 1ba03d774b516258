import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import TWO_PI, field
from qnlab import harmonic
from qnlab.constants import AUDIT_SEEDS, FROZEN
from qnlab.errors import ParameterError
from qnlab.harmonic import CubeFamily, NormReport
from qnlab.torus import ScalarField, TorusGrid


def cube_values(values, a1, a2, side, clipped):
    n = values.shape[0]
    r1, r2 = np.arange(a1, a1 + side), np.arange(a2, a2 + side)
    if clipped:
        r1, r2 = r1[r1 < n], r2[r2 < n]
    else:
        r1, r2 = r1 % n, r2 % n
    return values[np.ix_(r1, r2)]


def brute_maximal_at(values, i, j, family):
    n = values.shape[0]
    best = 0.0
    for a1, a2, side in family.cubes():
        if (i - a1) % n < side and (j - a2) % n < side:
            best = max(best, abs(cube_values(values, a1, a2, side, False).mean()))
    return best


def brute_bmo(values, family, clipped):
    best = 0.0
    for a1, a2, side in family.cubes():
        q = cube_values(values, a1, a2, side, clipped)
        best = max(best, np.abs(q - q.mean()).mean())
    return best + (np.abs(values).mean() if clipped else 0.0)


def random_field(g, seed):
    return ScalarField(g, np.random.default_rng(seed).standard_normal((g.n, g.n)))


# --- cube family and reports ------------------------------------------------------------------


def test_cube_family_covers_every_point():
    fam = CubeFamily(16)
    sides = [s for s, _ in fam.levels()]
    assert sides == [16, 8, 4, 2, 1]
    for side, stride in fam.levels():
        cover = np.zeros((16, 16), bool)
        for a1 in range(0, 16, stride):
            for a2 in range(0, 16, stride):
                cover[np.ix_(np.arange(a1, a1 + side) % 16, np.arange(a2, a2 + side) % 16)] = True
        assert cover.all()
    with pytest.raises(ParameterError):
        CubeFamily(12)
    with pytest.raises(ParameterError):
        CubeFamily(16, refine=3)


def test_norm_report():
    rep = NormReport.evaluate(1.0, 2.0, 0.5)
    assert rep.passed and rep.ratio == 0.5
    assert not NormReport.evaluate(1.0 + 1e-6, 2.0, 0.5).passed
    assert NormReport.evaluate(1.0 + 1e-10, 2.0, 0.5).passed
    assert json.loads(rep.to_json()) == {"lhs": 1.0, "rhs": 2.0, "constant": 0.5, "pass": True}
    assert NormReport.evaluate(0.0, 0.0, 1.0).ratio == 0.0
    assert NormReport.evaluate(1.0, 0.0, 1.0).ratio == math.inf


# --- maximal function ------------------------------------------------------------------------


def test_maximal_constant(g32):
    assert np.allclose(harmonic.maximal(ScalarField.constant(g32, -1.5)).values, 1.5, atol=1e-12)


def test_maximal_half_indicator_brute_force():
    g = TorusGrid(32)
    f = field(g, lambda x, y: (x < 0).astype(float))
    fam = CubeFamily(32)
    mf = harmonic.maximal(f, fam).values
    points = [(16, 0), (20, 5), (24, 24), (31, 17), (28, 9), (3, 3), (17, 30), (22, 14)]
    for i, j in points:
        assert mf[i, j] == pytest.approx(brute_maximal_at(f.values, i, j, fam), abs=1e-12)
    # deep in the right half the side-1 torus average is one half
    assert mf[24, 24] >= 0.5


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (16, 16), elements=st.floats(-10, 10)), arrays(np.float64, (16, 16), elements=st.floats(-10, 10)),
       st.floats(-5, 5))
def test_maximal_sublinear_homogeneous(a, b, c):
    g = TorusGrid(16)
    f, h = ScalarField(g, a), ScalarField(g, b)
    mf, mh = harmonic.maximal(f).values, harmonic.maximal(h).values
    assert np.all(harmonic.maximal(ScalarField(g, a + b)).values <= mf + mh + 1e-9)
    assert np.allclose(harmonic.maximal(ScalarField(g, c * a)).values, abs(c) * mf, atol=1e-9)
    assert np.all(mf >= np.abs(a) - 1e-12)


# --- BMO norms -------------------------------------------------------------------------------


def test_bmo_constant(g32):
    f = ScalarField.constant(g32, -2.5)
    assert harmonic.bmo_norm(f, "BMO_torus") <= 1e-12
    assert harmonic.bmo_norm(f, "bmo_local") == pytest.approx(2.5, abs=1e-12)
    with pytest.raises(ParameterError):
        harmonic.bmo_norm(f, "bmo")


@pytest.mark.parametrize("seed", range(20))
def test_bmo_bounded_by_twice_sup(seed):
    f = random_field(TorusGrid(32), seed)
    assert harmonic.bmo_norm(f) <= 2 * f.max_abs()


@pytest.mark.parametrize("mode,clipped", [("BMO_torus", False), ("bmo_local", True)])
def test_tanh_step_brute_force(mode, clipped):
    g = TorusGrid(64)
    f = field(g, lambda x, y: np.tanh(x / 0.05) + 0.3 * np.tanh(y / 0.1))
    fam = CubeFamily(64)
    assert harmonic.bmo_norm(f, mode, fam) == pytest.approx(brute_bmo(f.values, fam, clipped), rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_random_brute_force(seed):
    g = TorusGrid(16)
    f = random_field(g, seed)
    fam = CubeFamily(16)
    for mode, clipped in (("BMO_torus", False), ("bmo_local", True)):
        assert harmonic.bmo_norm(f, mode, fam) == pytest.approx(brute_bmo(f.values, fam, clipped), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-4, 4))
def test_bmo_homogeneous(seed, c):
    g = TorusGrid(16)
    f = random_field(g, seed)
    for mode in harmonic.MODES:
        assert harmonic.bmo_norm(ScalarField(g, c * f.values), mode) == pytest.approx(
            abs(c) * harmonic.bmo_norm(f, mode), rel=1e-9, abs=1e-12)
    # adding a constant leaves the periodic norm unchanged
    shifted = ScalarField(g, f.values + c)
    assert harmonic.bmo_norm(shifted) == pytest.approx(harmonic.bmo_norm(f), rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_refinement_monotone(seed):
    f = random_field(TorusGrid(32), seed)
    coarse, fine = CubeFamily(32, 2), CubeFamily(32, 4)
    for mode in harmonic.MODES:
        assert harmonic.bmo_norm(f, mode, fine) >= harmonic.bmo_norm(f, mode, coarse)
    assert np.all(harmonic.maximal(f, fine).values >= harmonic.maximal(f, coarse).values)


# --- inequality audits --------------------------------------------------------------------------


def test_cz_examples(g64):
    assert harmonic.cz_bound_check(ScalarField.constant(g64, 0.0)).lhs == 0.0
    rep = harmonic.cz_bound_check(field(g64, lambda x, y: np.sin(TWO_PI * x)))
    assert rep.rhs == pytest.approx(1.0) and 0 < rep.ratio < math.inf
    # the only nonzero gradient entry is -sin(2 pi x1)
    assert rep.lhs == pytest.approx(harmonic.bmo_norm(field(g64, lambda x, y: np.sin(TWO_PI * x))), rel=1e-12)
    with pytest.raises(ParameterError):
        harmonic.cz_bound_check(ScalarField.constant(g64, 1.0))


def test_duality_examples(g32):
    f = field(g32, lambda x, y: 1 + np.sin(TWO_PI * x) ** 2)
    zero = harmonic.duality_check(f, ScalarField.constant(g32, 0.0))
    assert zero["bmo_local"].lhs == 0.0 and zero["bmo_local"].passed and zero["BMO_torus"].passed
    c = -0.7
    const = harmonic.duality_check(f, ScalarField.constant(g32, c), constant_local=1.0)
    assert const["BMO_torus"] is None
    rep = const["bmo_local"]
    assert rep.lhs == pytest.approx(abs(c) * f.mean(), rel=1e-12) and rep.passed


def test_wiener_examples(g32):
    rep = harmonic.wiener_check(ScalarField.constant(g32, 1.0), 0.5, constant=1.0)
    assert rep.lhs == pytest.approx(1.0, abs=1e-12)
    assert rep.rhs == pytest.approx(0.5 + math.log(2), rel=1e-12)
    assert rep.passed
    assert harmonic.wiener_check(ScalarField.constant(g32, 0.0), 0.1).lhs == 0.0
    for eta in (0.0, 1.5):
        with pytest.raises(ParameterError):
            harmonic.wiener_check(ScalarField.constant(g32, 1.0), eta)


def test_wiener_log_term(g32):
    g = ScalarField.constant(g32, math.e)
    assert harmonic.wiener_rhs(g, 1.0) == pytest.approx(1.0 + math.e, rel=1e-12)


def test_local_vs_torus(g32):
    with pytest.raises(ParameterError):
        harmonic.local_vs_torus_check(ScalarField.constant(g32, 1.0))
    f = random_field(g32, 0)
    f = ScalarField(g32, f.values - f.mean())
    rep = harmonic.local_vs_torus_check(f, constant=10.0)
    assert rep.lhs == pytest.approx(harmonic.bmo_norm(f, "bmo_local"))
    assert rep.passed


@pytest.mark.parametrize("seed", AUDIT_SEEDS)
def test_frozen_field_audits(seed):
    from qnlab.calibrate import WIENER_ETAS, field_suite

    flow, d, f = field_suite(seed)
    g = flow.grid
    assert harmonic.cz_bound_check(flow.omega).passed
    assert harmonic.local_vs_torus_check(flow.omega).passed
    strain12 = ScalarField(g, d.values[0, 1])
    dual = harmonic.duality_check(ScalarField(g, f.values[0, 1]), strain12)
    assert dual["bmo_local"].passed and dual["BMO_torus"].passed
    for eta in WIENER_ETAS:
        rep = harmonic.wiener_check(ScalarField(g, f.values[0, 0]), eta)
        assert rep.passed and rep.fitted_constant == FROZEN["wiener"]
