"""Closed-form and trajectory-derived observables of the untreated flow.

The final susceptible count U_inf follows from the Lambert W expression

    U_inf = -W0(-R U exp(-R (U + I + (delta/p) V))) / R

which is constant along untreated trajectories and bounded above by
U* = 1/R.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lambertw import lambert_w0
from .model import HostState, ModelParams, ReproductionNumber, reproduction_number

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class AnalysisDomainError(ValueError):
    pass


@dataclass(frozen=True)
class FinalSizeQuery:
    r: float
    state0: HostState
    delta_over_p: float

    def __post_init__(self):
        if not self.r > 0:
            raise AnalysisDomainError(f"reproduction number must be > 0, got {self.r!r}")

    @classmethod
    def from_params(cls, mp: ModelParams, state: HostState, r: float | None = None) -> "FinalSizeQuery":
        if r is None:
            r = reproduction_number(mp).r
        return cls(r=r, state0=state, delta_over_p=mp.delta_over_p)


@dataclass(frozen=True)
class OmegaDomain:
    """States with I >= epsilon and V >= epsilon."""

    epsilon: float = 0.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise AnalysisDomainError(f"epsilon must be >= 0, got {self.epsilon!r}")


@dataclass(frozen=True)
class VPeak:
    time: float
    value: float
    interior: bool


def final_size(r, u, i, v, delta_over_p):
    """Vectorised U_inf over arrays of (U, I, V)."""
    u = np.asarray(u, dtype=float)
    arg = -r * u * np.exp(-r * (u + np.asarray(i, dtype=float) + delta_over_p * np.asarray(v, dtype=float)))
    return (0.0 - lambert_w0(arg)) / r


def u_infinity(q: FinalSizeQuery) -> float:
    s = q.state0
    return float(final_size(q.r, s.u, s.i, s.v, q.delta_over_p))


def auc_v(mp: ModelParams, state_start: HostState, state_end: HostState) -> float:
    """Integral of V between two states of one untreated trajectory."""
    a, b = state_start, state_end
    return ((mp.p / mp.delta) * (a.u - b.u + a.i - b.i) + a.v - b.v) / mp.c


def lyapunov_j(x: HostState, u_bar: float, mp: ModelParams) -> float:
    """Lyapunov candidate centred at (u_bar, 0, 0).

    For ``u_bar == 0`` the origin functional U - I + (delta/p) V is returned
    as is; unlike the u_bar > 0 branch it is not sign-definite.
    """
    if u_bar < 0:
        raise AnalysisDomainError(f"u_bar must be >= 0, got {u_bar!r}")
    if u_bar == 0:
        return x.u - x.i + mp.delta_over_p * x.v
    if x.u <= 0:
        raise AnalysisDomainError("lyapunov_j needs U > 0 when u_bar > 0")
    return x.u - u_bar - u_bar * np.log(x.u / u_bar) + x.i + mp.delta_over_p * x.v


def lyapunov_rate(x: HostState, u_bar: float, mp: ModelParams) -> float:
    """dJ/dt along the untreated flow: V (u_bar beta - delta c / p)."""
    return x.v * (u_bar * mp.beta - mp.delta * mp.c / mp.p)


def level_function(x: HostState, mp: ModelParams) -> float:
    """U* - U_inf(x); nonnegative, zero only at (U*, 0, 0), flow invariant."""
    rn = reproduction_number(mp)
    return rn.u_star - u_infinity(FinalSizeQuery.from_params(mp, x, rn.r))


def level_grid(mp: ModelParams, u, v, i=None):
    """level_function over broadcast arrays; I defaults to (c/p) V."""
    rn = reproduction_number(mp)
    v = np.asarray(v, dtype=float)
    if i is None:
        i = (mp.c / mp.p) * v
    return rn.u_star - final_size(rn.r, u, i, v, mp.delta_over_p)


def _distinct_neighbour(t, k, step):
    j = k + step
    while 0 <= j < len(t) and t[j] == t[k]:
        j += step
    return j if 0 <= j < len(t) else None


def peak_of_v(traj) -> VPeak:
    """Maximum of V over the samples, refined by a parabola through the
    neighbouring samples. A maximum at either end is not an interior peak."""
    t, v = traj.t, traj.v
    k = int(np.argmax(v))
    left = _distinct_neighbour(t, k, -1)
    right = _distinct_neighbour(t, k, +1)
    if left is None or right is None or v[k] <= 0:
        return VPeak(float(t[k]), float(v[k]), False)
    t0, t1, t2 = t[left], t[k], t[right]
    v0, v1, v2 = v[left], v[k], v[right]
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (v1 - v0) + t1 * (v0 - v2) + t0 * (v2 - v1)) / denom
    b = (t2 * t2 * (v0 - v1) + t1 * t1 * (v2 - v0) + t0 * t0 * (v1 - v2)) / denom
    if a >= 0:
        return VPeak(float(t1), float(v1), True)
    tv = -b / (2 * a)
    if not t0 <= tv <= t2:
        return VPeak(float(t1), float(v1), True)
    c = v1 - a * t1 * t1 - b * t1
    value = a * tv * tv + b * tv + c
    return VPeak(float(tv), float(max(value, v1)), True)


def u_infinity_maximizer(omega: OmegaDomain, r: ReproductionNumber, mp: ModelParams):
    """Maximiser of U_inf over {I >= eps, V >= eps}: the corner (U*, eps, eps)."""
    eps = omega.epsilon
    x = HostState(r.u_star, eps, eps)
    return x, u_infinity(FinalSizeQuery(r.r, x, mp.delta_over_p))


@dataclass
class Property1Item:
    passed: bool
    witnesses: list = field(default_factory=list)


@dataclass
class Property1Report:
    items: dict

    @property
    def all_passed(self) -> bool:
        return all(item.passed for item in self.items.values())


def _strictly(seq, decreasing):
    d = np.diff(np.asarray(seq, dtype=float))
    return bool(np.all(d < 0) if decreasing else np.all(d > 0))


def property1_probe(mp: ModelParams, x_ref: HostState | None = None) -> Property1Report:
    """Check the monotonicity and extremal properties of U_inf on structured sweeps.

    ``x_ref`` supplies the fixed (I, V) used by items 1-3; defaults to a
    mid-infection state of the given parameters.
    """
    rn = reproduction_number(mp)
    r, us, dp = rn.r, rn.u_star, mp.delta_over_p
    if x_ref is None:
        x_ref = HostState(8 * us, 1e-5 * us, 1e-6 * us)
    i0, v0 = x_ref.i, x_ref.v
    items = {}

    # 1: R -> infinity drives U_inf to 0, R -> 0 leaves U(t0) untouched
    big = float(final_size(r * 1e4, x_ref.u, i0, v0, dp))
    small = float(final_size(r * 1e-4, x_ref.u, i0, v0, dp))
    items[1] = Property1Item(
        big / x_ref.u < 1e-3 and abs(small / x_ref.u - 1) < 1e-3,
        [("R*1e4", big / x_ref.u), ("R*1e-4", small / x_ref.u)],
    )

    above = [1.1 * us, 2 * us, 4 * us]
    vals = final_size(r, np.array(above), i0, v0, dp)
    items[2] = Property1Item(_strictly(vals, True) and bool(np.all(vals < us)), list(zip(above, vals.tolist())))

    below = [0.25 * us, 0.5 * us, 0.9 * us]
    vals = final_size(r, np.array(below), i0, v0, dp)
    items[3] = Property1Item(_strictly(vals, False) and bool(np.all(vals < us)), list(zip(below, vals.tolist())))

    loads = np.array([0.0, 0.02, 0.2]) * us
    by_v = final_size(r, 2 * us, 0.0, loads, dp)
    by_i = final_size(r, 2 * us, loads, 0.0, dp)
    items[4] = Property1Item(
        _strictly(by_v, True) and _strictly(by_i, True)
        and bool(np.all(by_v <= us) and np.all(by_i <= us)),
        [("V", loads.tolist(), by_v.tolist()), ("I", loads.tolist(), by_i.tolist())],
    )

    at_star = float(final_size(r, us, 0.0, 0.0, dp))
    uu, ii, vv = np.meshgrid(np.linspace(0, 4 * us, 81), np.linspace(0, us, 21), np.linspace(0, us, 21),
                             indexing="ij")
    sweep_max = float(np.max(final_size(r, uu, ii, vv, dp)))
    items[5] = Property1Item(
        abs(at_star / us - 1) < 1e-8 and sweep_max <= at_star * (1 + 1e-12),
        [("U_inf(U*,0,0)", at_star), ("sweep max", sweep_max)],
    )
    return Property1Report(items)


def auc_trapezoid(traj) -> float:
    """Trapezoidal integral of V over the trajectory samples."""
    return float(_trapezoid(traj.v, traj.t))
