"""Impulsive simulation of the PK/PD-controlled infection model.

Between dose instants the four-state flow is integrated with an adaptive
Dormand-Prince 5(4) pair whose steps land exactly on every impulse; at an
impulse the drug amount jumps by the scheduled dose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _dopri
from .model import HostState, ModelParams, PkPdParams, eta

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
DEFAULT_DT = 0.01
LONG_HORIZON = 1000.0
MAX_STEPS = 5_000_000

NO_DRUG = PkPdParams(delta_d=1.0, ec50=1.0, period_t=1.0, u_max=0.0, eta_max=0.0)


class IntegrationError(RuntimeError):
    """The integrator could not meet tolerance; ``time`` is where it gave up."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.12g}")
        self.time = time


@dataclass(frozen=True)
class DoseSchedule:
    """Impulse times (day) with dose amounts (mg), integrated up to ``horizon``."""

    impulses: tuple[tuple[float, float], ...]
    horizon: float

    def __post_init__(self):
        imps = tuple((float(t), float(u)) for t, u in self.impulses)
        object.__setattr__(self, "impulses", imps)
        if not np.isfinite(self.horizon) or self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon!r}")
        prev = -np.inf
        for t, u in imps:
            if not t > prev:
                raise ValueError("impulse times must be strictly increasing")
            if t < 0 or t > self.horizon:
                raise ValueError(f"impulse time {t} outside [0, {self.horizon}]")
            if not np.isfinite(u) or u < 0:
                raise ValueError(f"dose amount must be >= 0, got {u!r}")
            prev = t

    @classmethod
    def empty(cls, horizon: float) -> "DoseSchedule":
        return cls((), horizon)

    def with_horizon(self, horizon: float) -> "DoseSchedule":
        return DoseSchedule(tuple(imp for imp in self.impulses if imp[0] <= horizon), horizon)

    def merge(self, other: "DoseSchedule") -> "DoseSchedule":
        """Union of two schedules; coinciding impulse times add their doses."""
        acc: dict[float, float] = {}
        for t, u in self.impulses + other.impulses:
            acc[t] = acc.get(t, 0.0) + u
        return DoseSchedule(tuple(sorted(acc.items())), max(self.horizon, other.horizon))

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.impulses], dtype=float)

    @property
    def amounts(self) -> np.ndarray:
        return np.array([u for _, u in self.impulses], dtype=float)


@dataclass
class Trajectory:
    """Sampled solution. Rows of ``y`` are (U, I, V, D).

    Impulse instants appear twice in ``t``: the pre-jump row followed by the
    post-jump row. ``events`` keeps the (time, amount) of every applied dose.
    """

    t: np.ndarray
    y: np.ndarray
    events: list[tuple[float, float]] = field(default_factory=list)
    pk: PkPdParams | None = None
    n_steps: int = 0
    n_rejected: int = 0

    @property
    def u(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def i(self) -> np.ndarray:
        return self.y[:, 1]

    @property
    def v(self) -> np.ndarray:
        return self.y[:, 2]

    @property
    def d(self) -> np.ndarray:
        return self.y[:, 3]

    @property
    def eta(self) -> np.ndarray:
        if self.pk is None:
            return np.zeros_like(self.t)
        return eta(self.d, self.pk)

    @property
    def event_flags(self) -> np.ndarray:
        """0 for ordinary samples, 1 for pre-jump rows, 2 for post-jump rows."""
        flags = np.zeros(self.t.shape, dtype=int)
        dup = np.flatnonzero(np.diff(self.t) == 0)
        flags[dup] = 1
        flags[dup + 1] = 2
        return flags

    @property
    def terminal(self) -> HostState:
        return HostState.from_array(self.y[-1])

    @cached_property
    def peak(self):
        from .analysis import peak_of_v

        return peak_of_v(self)

    def state_at(self, time: float) -> HostState:
        """Linear interpolation of the samples; at an impulse instant the
        post-jump row is returned."""
        if time < self.t[0] or time > self.t[-1]:
            raise ValueError(f"time {time} outside [{self.t[0]}, {self.t[-1]}]")
        k = int(np.searchsorted(self.t, time, side="right")) - 1
        if self.t[k] == time or k == len(self.t) - 1:
            return HostState.from_array(self.y[k])
        w = (time - self.t[k]) / (self.t[k + 1] - self.t[k])
        return HostState.from_array((1 - w) * self.y[k] + w * self.y[k + 1])

    def after(self, time: float) -> "Trajectory":
        """Samples strictly after ``time``."""
        keep = self.t > time
        return Trajectory(self.t[keep], self.y[keep], [e for e in self.events if e[0] > time], self.pk)


def _params(mp: ModelParams, pk: PkPdParams) -> np.ndarray:
    return np.array([mp.beta, mp.delta, mp.p, mp.c, pk.delta_d, pk.ec50, pk.eta_max], dtype=float)


def _sample_grid(t0, horizon, dt, imp_times):
    n = int(np.floor((horizon - t0) / dt + 1e-9))
    grid = t0 + np.arange(n + 1) * dt
    if grid[-1] < horizon:
        grid = np.append(grid, horizon)
    else:
        grid[-1] = horizon
    if len(imp_times):
        hit = np.min(np.abs(grid[:, None] - imp_times[None, :]), axis=1) < 1e-9
        grid = grid[~hit]
    times = np.concatenate([grid, np.repeat(imp_times, 2)])
    kinds = np.concatenate([
        np.zeros(len(grid), dtype=np.int64),
        np.tile([_dopri.KIND_PRE_JUMP, _dopri.KIND_POST_JUMP], len(imp_times)),
    ])
    order = np.lexsort((kinds, times))
    return times[order], kinds[order]


def _run(x0, mp, pk, imp_t, imp_u, t0, t_end, rtol, atol, out_t, out_kind):
    y = np.array(x0, dtype=float)
    out_y = np.zeros((len(out_t), 4))
    counters = np.zeros(2, dtype=np.int64)
    status, t_fail = _dopri.integrate_impulsive(
        y, float(t0), float(t_end), imp_t, imp_u, _params(mp, pk), float(rtol), float(atol),
        out_t, out_kind, out_y, MAX_STEPS, counters,
    )
    if status == _dopri.STEP_UNDERFLOW:
        raise IntegrationError("step size underflow", t_fail)
    if status == _dopri.NEGATIVE_STATE:
        raise IntegrationError("state left the nonnegative orthant", t_fail)
    if status == _dopri.TOO_MANY_STEPS:
        raise IntegrationError(f"more than {MAX_STEPS} steps", t_fail)
    return y, out_y, counters


def _active_impulses(sched: DoseSchedule, t0: float, pk: PkPdParams | None):
    imps = [(t, u) for t, u in sched.impulses if t >= t0 and u > 0.0]
    if pk is not None:
        for t, u in imps:
            if u > pk.u_max:
                raise ValueError(f"dose {u} at t={t} exceeds u_max={pk.u_max}")
    imp_t = np.array([t for t, _ in imps], dtype=float)
    imp_u = np.array([u for _, u in imps], dtype=float)
    return imps, imp_t, imp_u


def simulate(
    x0: HostState,
    mp: ModelParams,
    pk: PkPdParams,
    sched: DoseSchedule,
    *,
    t0: float = 0.0,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    dt: float = DEFAULT_DT,
) -> Trajectory:
    """Simulate the controlled system from ``x0`` at ``t0`` to ``sched.horizon``.

    Zero-amount impulses are skipped, so they leave no duplicate rows.
    """
    if sched.horizon < t0:
        raise ValueError(f"horizon {sched.horizon} before start time {t0}")
    imps, imp_t, imp_u = _active_impulses(sched, t0, pk)
    out_t, out_kind = _sample_grid(t0, sched.horizon, dt, imp_t)
    _, out_y, counters = _run(x0.as_array(), mp, pk, imp_t, imp_u, t0, sched.horizon,
                              rtol, atol, out_t, out_kind)
    return Trajectory(out_t, out_y, imps, pk, int(counters[0]), int(counters[1]))


def simulate_uncontrolled(
    x0: HostState,
    mp: ModelParams,
    horizon: float,
    *,
    t0: float = 0.0,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    dt: float = DEFAULT_DT,
) -> Trajectory:
    """Untreated (U, I, V) flow; the drug column is identically zero."""
    x = HostState(x0.u, x0.i, x0.v, 0.0)
    return simulate(x, mp, NO_DRUG, DoseSchedule.empty(horizon), t0=t0, rtol=rtol, atol=atol, dt=dt)


def terminal_state(
    x0: HostState,
    mp: ModelParams,
    pk: PkPdParams,
    sched: DoseSchedule,
    *,
    t0: float = 0.0,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> HostState:
    """State at ``sched.horizon`` without recording samples (search fast path)."""
    _, imp_t, imp_u = _active_impulses(sched, t0, pk)
    empty_t = np.zeros(0)
    empty_k = np.zeros(0, dtype=np.int64)
    y, _, _ = _run(x0.as_array(), mp, pk, imp_t, imp_u, t0, sched.horizon, rtol, atol, empty_t, empty_k)
    return HostState.from_array(y)
