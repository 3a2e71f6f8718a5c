import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goldilocks.lambertw import BRANCH_POINT, LambertDomainError, lambert_w0

INV_E = math.exp(-1.0)


def bisection_w(x, tol=1e-15):
    """Root of w*exp(w) = x on [-1, 0]; w*exp(w) is increasing there."""
    lo, hi = -1.0, 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) < x:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_zero():
    assert lambert_w0(0.0) == 0.0


def test_branch_point():
    assert lambert_w0(BRANCH_POINT) == pytest.approx(-1.0, abs=1e-7)
    assert lambert_w0(-INV_E) == pytest.approx(-1.0, abs=1e-7)


def test_minus_tenth_against_bisection():
    expected = bisection_w(-0.1)
    assert expected == pytest.approx(-0.111832559, abs=1e-9)
    assert lambert_w0(-0.1) == pytest.approx(expected, abs=1e-14)


def test_against_scipy():
    special = pytest.importorskip("scipy.special")
    x = np.linspace(-INV_E + 1e-6, 0.0, 2001)
    ref = special.lambertw(x, 0).real
    np.testing.assert_allclose(lambert_w0(x), ref, rtol=1e-13, atol=1e-15)


def test_against_mpmath_near_branch_point():
    # scipy drifts by ~3e-11 this close to -1/e; 40-digit arithmetic does not
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    for gap in (1e-15, 1e-12, 1e-10, 1e-8, 1e-7):
        x = -INV_E + gap
        ref = float(mpmath.lambertw(mpmath.mpf(x)))
        assert lambert_w0(x) == pytest.approx(ref, rel=1e-14, abs=0)


def test_residual_on_random_points(rng):
    x = -rng.uniform(0.0, INV_E, 1000)
    w = lambert_w0(x)
    assert np.max(np.abs(w * np.exp(w) - x)) <= 1e-12


def test_near_branch_point_accuracy():
    for gap in (1e-16, 1e-13, 1e-10, 1e-9, 1e-8, 2e-8, 1e-6):
        x = -INV_E + gap
        w = lambert_w0(x)
        assert abs(w * math.exp(w) - x) <= 1e-15
        assert w == pytest.approx(bisection_w(x), abs=1e-7)


@given(st.floats(min_value=-INV_E, max_value=0.0), st.floats(min_value=-INV_E, max_value=0.0))
def test_monotone(a, b):
    if a == b:
        return
    lo, hi = min(a, b), max(a, b)
    wl, wh = lambert_w0(lo), lambert_w0(hi)
    assert wl <= wh
    if hi - lo > 1e-9:
        assert wl < wh


@given(st.floats(min_value=-INV_E, max_value=0.0))
def test_range(x):
    assert -1.0 <= lambert_w0(x) <= 0.0


def test_array_shape_preserved():
    x = np.array([[-0.1, 0.0], [-0.2, -0.3]])
    assert lambert_w0(x).shape == (2, 2)
    assert isinstance(lambert_w0(-0.1), float)


@pytest.mark.parametrize("bad", [1e-3, 1.0, -0.5, float("nan"), float("inf")])
def test_domain_errors(bad):
    with pytest.raises(LambertDomainError):
        lambert_w0(bad)
