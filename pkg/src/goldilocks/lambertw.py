"""Principal branch of the Lambert W function on [-1/e, 0].

Only the slice of the real line produced by the final-size formula is
supported, so the result always lies in [-1, 0].
"""

from __future__ import annotations

import math

import numpy as np

# 1/e split into a double and its rounding residual, so that x + 1/e can be
# formed without cancellation near the branch point.
_INV_E_HI = 0.36787944117144233
_INV_E_LO = -1.2428753672788363e-17

BRANCH_POINT = -_INV_E_HI
DOMAIN_SLACK = 1e-14
SERIES_RADIUS = 1e-8
MAX_ITER = 50

# W(x) = sum c_k p^k with p = sqrt(2 (e x + 1))
_BRANCH_SERIES = (
    -1.0,
    1.0,
    -1.0 / 3.0,
    11.0 / 72.0,
    -43.0 / 540.0,
    769.0 / 17280.0,
    -221.0 / 8505.0,
    680863.0 / 43545600.0,
)


class LambertDomainError(ValueError):
    """Argument outside [-1/e, 0]."""


def _branch_series(p):
    w = np.zeros_like(p)
    for coeff in reversed(_BRANCH_SERIES):
        w = w * p + coeff
    return w


def _halley(x, w):
    active = np.ones(x.shape, dtype=bool)
    for _ in range(MAX_ITER):
        if not active.any():
            break
        wa = w[active]
        ew = np.exp(wa)
        f = wa * ew - x[active]
        wp1 = wa + 1.0
        denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
        step = np.where(denom != 0.0, f / np.where(denom != 0.0, denom, 1.0), 0.0)
        w[active] = wa - step
        done = np.abs(step) <= 4.0 * np.finfo(float).eps * (1.0 + np.abs(wa))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return w


def lambert_w0(x):
    """Evaluate W0(x) for x in [-1/e, 0].

    Accepts a scalar or an array. Arguments within 1e-8 of the branch
    point use the square-root series directly; everywhere else Halley's
    iteration is run from a series seed (near -1/e) or ``log1p(x)``.

    Raises:
        LambertDomainError: if any argument is below -1/e - 1e-14, above 0,
            or not finite.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    xs = np.atleast_1d(arr).astype(float, copy=True)

    bad = ~np.isfinite(xs) | (xs > 0.0) | (xs < BRANCH_POINT - DOMAIN_SLACK)
    if bad.any():
        raise LambertDomainError(
            f"lambert_w0 argument {xs[bad][0]!r} outside [-1/e, 0]"
        )

    # distance to the branch point, (x + 1/e) >= 0
    gap = np.maximum((xs + _INV_E_HI) + _INV_E_LO, 0.0)
    p = np.sqrt(2.0 * math.e * gap)

    w = np.empty_like(xs)
    near = gap <= SERIES_RADIUS
    mid = ~near & (math.e * gap < 0.25)
    far = ~near & ~mid
    w[near] = _branch_series(p[near])
    if mid.any():
        w[mid] = _halley(xs[mid], _branch_series(p[mid]))
    if far.any():
        w[far] = _halley(xs[far], np.log1p(xs[far]))

    w = np.clip(w, -1.0, 0.0)
    w[xs == 0.0] = 0.0
    if scalar:
        return float(w[0])
    return w.reshape(arr.shape)
