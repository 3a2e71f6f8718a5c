"""Single-interval antiviral treatments: Goldilocks dose search and outcome
classification.

A single-interval plan gives the same dose at every t_k = kT inside
[t_i, t_f] and nothing elsewhere. Interrupting it leaves the host either
near the stable branch (U <= U*) or near the unstable one (U > U*), which
decides between a flat tail and a second outbreak.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .analysis import FinalSizeQuery, VPeak, peak_of_v, u_infinity
from .integrator import (
    DEFAULT_ATOL,
    DEFAULT_DT,
    DEFAULT_RTOL,
    LONG_HORIZON,
    DoseSchedule,
    Trajectory,
    simulate,
    simulate_uncontrolled,
    terminal_state,
)
from .model import HostState, ModelParams, PkPdParams, reproduction_number

DOSE_STEP = 0.001


class Scenario(str, Enum):
    QUASI_OPTIMAL = "QuasiOptimal"
    SOFT_LONG_TERM = "SoftLongTerm"
    STRONG_LONG_TERM = "StrongLongTerm"
    SHORT_TERM = "ShortTerm"


class InvalidPlanError(ValueError):
    pass


class NoDoseFoundError(RuntimeError):
    """No dose in [0, u_max] leaves U(t_f) above U*."""

    def __init__(self, message: str, u_at_tf: float | None = None):
        super().__init__(message)
        self.u_at_tf = u_at_tf


class LateTreatmentWarning(UserWarning):
    """Treatment starts at or after the untreated viral peak."""


@dataclass(frozen=True)
class QssThresholds:
    eps_v: float = 1e-2
    eps_i: float = 1e-2
    tol_u: float = 0.02


@dataclass(frozen=True)
class SingleIntervalPlan:
    t_i: float
    t_f: float
    dose: float
    period: float = 1.0

    def __post_init__(self):
        if not (0 <= self.t_i < self.t_f < math.inf):
            raise InvalidPlanError(f"need 0 <= t_i < t_f < inf, got t_i={self.t_i}, t_f={self.t_f}")
        if not self.dose >= 0:
            raise InvalidPlanError(f"dose must be >= 0, got {self.dose!r}")
        if not self.period > 0:
            raise InvalidPlanError(f"period must be > 0, got {self.period!r}")


@dataclass(frozen=True)
class ScenarioVerdict:
    kind: Scenario
    u_at_tf: float
    i_at_tf: float
    v_at_tf: float
    qss: bool
    predicted_u_infinity: float
    simulated_u_infinity: float
    rebound_expected: bool
    observed_second_peak: tuple[float, float] | None
    v_peak: VPeak

    def summary(self) -> str:
        text = self.kind.value
        if self.rebound_expected:
            text += ", rebound expected"
        return text


@dataclass(frozen=True)
class TwoStepReport:
    phase2_dose: float
    v_peak: VPeak
    u_at_tf: float
    predicted_u_infinity: float
    simulated_u_infinity: float
    reference_dose: float | None
    reference_v_peak: VPeak | None
    reference_u_infinity: float | None


def dosing_times(t_i: float, t_f: float, period: float) -> np.ndarray:
    """Instants k*period lying in [t_i, t_f]."""
    k0 = math.ceil(t_i / period - 1e-9)
    k1 = math.floor(t_f / period + 1e-9)
    return np.arange(k0, k1 + 1) * period


def build_schedule(plan: SingleIntervalPlan, horizon: float | None = None,
                   *, exclude_end: bool = False) -> DoseSchedule:
    """Impulses of ``plan.dose`` at every t_k = kT in [t_i, t_f].

    ``exclude_end`` drops a dose falling exactly on t_f, for chaining phases.
    """
    times = dosing_times(plan.t_i, plan.t_f, plan.period)
    if exclude_end:
        times = times[times < plan.t_f - 1e-9]
    horizon = plan.t_f if horizon is None else horizon
    if horizon < plan.t_f:
        raise InvalidPlanError(f"horizon {horizon} ends before t_f={plan.t_f}")
    return DoseSchedule(tuple((float(t), float(plan.dose)) for t in times), horizon)


@lru_cache(maxsize=64)
def untreated_peak_time(mp: ModelParams, x0: HostState, t0: float = 0.0, horizon: float = 200.0) -> float:
    """Time of the untreated viral peak; infinite when V never rises."""
    peak = simulate_uncontrolled(x0, mp, t0 + horizon, t0=t0, dt=0.01).peak
    return peak.time if peak.interior else math.inf


def _state_before(x0, mp, pk, t0, t_i, prior, rtol, atol):
    if t_i == t0:
        return x0
    imps = () if prior is None else tuple(imp for imp in prior.impulses if imp[0] < t_i)
    return terminal_state(x0, mp, pk, DoseSchedule(imps, t_i), t0=t0, rtol=rtol, atol=atol)


def goldilocks_dose(
    t_i: float,
    t_f: float,
    mp: ModelParams,
    pk: PkPdParams,
    x0: HostState,
    *,
    t0: float = 0.0,
    prior: DoseSchedule | None = None,
    step: float = DOSE_STEP,
    method: str = "bisection",
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> float:
    """Smallest dose on the ``step`` grid whose treatment on [t_i, t_f]
    ends with U(t_f) > U*.

    ``x0`` is the state at ``t0``; impulses of ``prior`` before t_i are
    applied on the way to t_i. ``method="scan"`` runs the literal
    increment-by-``step`` loop; ``"bisection"`` searches the same grid
    assuming U(t_f) is nondecreasing in the dose.

    Raises:
        NoDoseFoundError: if even ``pk.u_max`` leaves U(t_f) <= U*.
    """
    if not t0 <= t_i < t_f:
        raise InvalidPlanError(f"need t0 <= t_i < t_f, got t0={t0}, t_i={t_i}, t_f={t_f}")
    if method not in ("bisection", "scan"):
        raise ValueError(f"unknown search method {method!r}")
    u_star = reproduction_number(mp).u_star

    if t_i >= untreated_peak_time(mp, x0, t0):
        warnings.warn(f"treatment starts at t_i={t_i}, after the untreated viral peak",
                      LateTreatmentWarning, stacklevel=2)

    start = _state_before(x0, mp, pk, t0, t_i, prior, rtol, atol)
    if start.u <= u_star:
        raise NoDoseFoundError(
            f"U(t_i)={start.u:.6g} <= U*={u_star:.6g}; U is non-increasing so no dose can end above U*",
            start.u,
        )
    times = dosing_times(t_i, t_f, pk.period_t)
    k_max = int(math.floor(pk.u_max / step + 1e-9))

    def dose_of(k):
        return min(round(k * step, 12), pk.u_max)

    def u_end(k):
        sched = DoseSchedule(tuple((float(t), dose_of(k)) for t in times), t_f)
        return terminal_state(start, mp, pk, sched, t0=t_i, rtol=rtol, atol=atol).u

    if method == "scan":
        for k in range(k_max + 1):
            if u_end(k) > u_star:
                return dose_of(k)
        raise NoDoseFoundError(f"no dose up to u_max={pk.u_max} gives U(t_f) > U*", u_end(k_max))

    if u_end(0) > u_star:
        return 0.0
    top = u_end(k_max)
    if not top > u_star:
        raise NoDoseFoundError(
            f"U(t_f)={top:.6g} <= U*={u_star:.6g} even at u_max={pk.u_max}", top
        )
    lo, hi = 0, k_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if u_end(mid) > u_star:
            hi = mid
        else:
            lo = mid
    return dose_of(hi)


def detect_qss(traj: Trajectory, at: float, mp: ModelParams,
               thresholds: QssThresholds = QssThresholds()) -> bool:
    """Quasi-steady state at ``at``: V and I both below their thresholds."""
    s = traj.state_at(at)
    return s.v <= thresholds.eps_v and s.i <= thresholds.eps_i


def _verdict(traj, t_f, mp, thresholds):
    rn = reproduction_number(mp)
    s = traj.state_at(t_f)
    qss = detect_qss(traj, t_f, mp, thresholds)
    if not qss:
        kind = Scenario.SHORT_TERM
    elif abs(s.u - rn.u_star) <= thresholds.tol_u * rn.u_star:
        kind = Scenario.QUASI_OPTIMAL
    elif s.u < rn.u_star:
        kind = Scenario.SOFT_LONG_TERM
    else:
        kind = Scenario.STRONG_LONG_TERM

    second = None
    tail = traj.after(t_f)
    if len(tail.t) >= 3:
        pk2 = peak_of_v(tail)
        # wobbles at the tolerance floor are not a rebound
        if pk2.interior and pk2.value > max(s.v, thresholds.eps_v):
            second = (pk2.time, pk2.value)

    return ScenarioVerdict(
        kind=kind,
        u_at_tf=s.u,
        i_at_tf=s.i,
        v_at_tf=s.v,
        qss=qss,
        predicted_u_infinity=u_infinity(FinalSizeQuery.from_params(mp, s, rn.r)),
        simulated_u_infinity=float(traj.terminal.u),
        rebound_expected=kind is Scenario.STRONG_LONG_TERM,
        observed_second_peak=second,
        v_peak=traj.peak,
    )


def run_plan(
    plan: SingleIntervalPlan,
    mp: ModelParams,
    pk: PkPdParams,
    x0: HostState,
    *,
    t0: float = 0.0,
    horizon: float = LONG_HORIZON,
    thresholds: QssThresholds = QssThresholds(),
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    dt: float = DEFAULT_DT,
) -> tuple[ScenarioVerdict, Trajectory]:
    """Simulate ``plan`` out to ``horizon`` and classify it."""
    if plan.dose > pk.u_max:
        raise InvalidPlanError(f"dose {plan.dose} exceeds u_max={pk.u_max}")
    if plan.t_i >= untreated_peak_time(mp, x0, t0):
        warnings.warn(f"treatment starts at t_i={plan.t_i}, after the untreated viral peak",
                      LateTreatmentWarning, stacklevel=2)
    traj = simulate(x0, mp, pk, build_schedule(plan, horizon), t0=t0, rtol=rtol, atol=atol, dt=dt)
    return _verdict(traj, plan.t_f, mp, thresholds), traj


def classify(plan: SingleIntervalPlan, mp: ModelParams, pk: PkPdParams, x0: HostState,
             **kwargs) -> ScenarioVerdict:
    """Scenario of a single-interval treatment; keywords as for :func:`run_plan`."""
    return run_plan(plan, mp, pk, x0, **kwargs)[0]


def upper_bound_check(traj: Trajectory, mp: ModelParams) -> bool:
    """Terminal U does not exceed U* (with 1e-3 relative slack)."""
    return bool(traj.terminal.u <= reproduction_number(mp).u_star * (1 + 1e-3))


def two_step_plan(
    t_i: float,
    t_m: float,
    t_f: float,
    strong_dose: float,
    mp: ModelParams,
    pk: PkPdParams,
    x0: HostState,
    *,
    horizon: float = LONG_HORIZON,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    dt: float = DEFAULT_DT,
) -> tuple[DoseSchedule, TwoStepReport]:
    """Strong dose on [t_i, t_m), then the Goldilocks dose for t_m on [t_m, t_f].

    The report compares the regimen with the quasi-optimal single-interval
    plan on [t_i, t_m] when that plan exists.
    """
    if not t_i < t_m < t_f:
        raise InvalidPlanError(f"need t_i < t_m < t_f, got {t_i}, {t_m}, {t_f}")
    period = pk.period_t
    phase1 = build_schedule(SingleIntervalPlan(t_i, t_m, strong_dose, period), exclude_end=True)
    with warnings.catch_warnings():
        # phase 2 starts after the peak by construction
        warnings.simplefilter("ignore", LateTreatmentWarning)
        g2 = goldilocks_dose(t_m, t_f, mp, pk, x0, prior=phase1, rtol=rtol, atol=atol)
    phase2 = build_schedule(SingleIntervalPlan(t_m, t_f, g2, period))
    sched = DoseSchedule(phase1.impulses + phase2.impulses, horizon)

    rn = reproduction_number(mp)
    traj = simulate(x0, mp, pk, sched, rtol=rtol, atol=atol, dt=dt)
    s = traj.state_at(t_f)

    ref_dose = ref_peak = ref_uinf = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LateTreatmentWarning)
            ref_dose = goldilocks_dose(t_i, t_m, mp, pk, x0, rtol=rtol, atol=atol)
            ref_verdict, _ = run_plan(SingleIntervalPlan(t_i, t_m, ref_dose, period), mp, pk, x0,
                                      horizon=horizon, rtol=rtol, atol=atol, dt=dt)
        ref_peak = ref_verdict.v_peak
        ref_uinf = ref_verdict.simulated_u_infinity
    except NoDoseFoundError:
        ref_dose = None

    report = TwoStepReport(
        phase2_dose=g2,
        v_peak=traj.peak,
        u_at_tf=s.u,
        predicted_u_infinity=u_infinity(FinalSizeQuery.from_params(mp, s, rn.r)),
        simulated_u_infinity=float(traj.terminal.u),
        reference_dose=ref_dose,
        reference_v_peak=ref_peak,
        reference_u_infinity=ref_uinf,
    )
    return sched, report
