"""Target-cell-limited infection model with one-compartment PK and Emax PD.

States are susceptible cells U (cell/mm^3), infected cells I (cell/mm^3),
virus V (copies/mL) and drug amount D (mg). Units are used exactly as
reported for the fitted patient, without dimensional conversion.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

DEFAULT_ETA_MAX = 0.99
DEFAULT_U_MAX = 1000.0


@dataclass(frozen=True)
class ModelParams:
    """Uncontrolled dynamics: infection ``beta``, infected-cell death
    ``delta``, virion production ``p`` and viral clearance ``c``."""

    beta: float
    delta: float
    p: float
    c: float

    def __post_init__(self):
        for name in ("beta", "delta", "p", "c"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"ModelParams.{name} must be > 0, got {value!r}")

    @property
    def slow_clearance(self) -> bool:
        """True when c/delta < 2, where the I ~ (c/p) V shortcut breaks down."""
        return self.c / self.delta < 2.0

    @property
    def delta_over_p(self) -> float:
        return self.delta / self.p

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PkPdParams:
    delta_d: float
    ec50: float
    period_t: float = 1.0
    u_max: float = DEFAULT_U_MAX
    eta_max: float = DEFAULT_ETA_MAX

    def __post_init__(self):
        for name in ("delta_d", "ec50", "period_t"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"PkPdParams.{name} must be > 0, got {value!r}")
        if not np.isfinite(self.u_max) or self.u_max < 0:
            raise ValueError(f"PkPdParams.u_max must be >= 0, got {self.u_max!r}")
        if not 0 <= self.eta_max < 1:
            raise ValueError(f"PkPdParams.eta_max must be in [0, 1), got {self.eta_max!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReproductionNumber:
    r: float
    u_star: float


@dataclass(frozen=True)
class HostState:
    u: float
    i: float
    v: float
    d: float = 0.0

    def __post_init__(self):
        for name in ("u", "i", "v", "d"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"HostState.{name} must be >= 0, got {value!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.i, self.v, self.d], dtype=float)

    @classmethod
    def from_array(cls, y) -> "HostState":
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]) if len(y) > 3 else 0.0)

    def to_dict(self) -> dict:
        return asdict(self)


def patient_a() -> ModelParams:
    """Fitted parameters of the virtual patient 'A' (acute respiratory infection)."""
    return ModelParams(beta=1.35e-7, delta=0.61, p=0.2, c=2.4)


def patient_a_pkpd(**overrides) -> PkPdParams:
    """Antiviral PK/PD used with patient 'A' (delta_D = 2/day, EC50 = 75 mg, T = 1 day)."""
    values = dict(delta_d=2.0, ec50=75.0, period_t=1.0)
    values.update(overrides)
    return PkPdParams(**values)


PATIENT_A_X0 = HostState(u=4e8, i=0.0, v=0.31, d=0.0)


def rhs_uncontrolled(s: HostState, mp: ModelParams) -> tuple[float, float, float]:
    infection = mp.beta * s.u * s.v
    return (-infection, infection - mp.delta * s.i, mp.p * s.i - mp.c * s.v)


def eta(d, pk: PkPdParams):
    """Drug efficacy ``min(D / (D + EC50), eta_max)``."""
    if np.ndim(d) == 0:
        d = float(d)
        return min(d / (d + pk.ec50), pk.eta_max)
    d = np.asarray(d, dtype=float)
    return np.minimum(d / (d + pk.ec50), pk.eta_max)


def rhs_controlled(s: HostState, mp: ModelParams, pk: PkPdParams) -> tuple[float, float, float, float]:
    infection = mp.beta * (1.0 - eta(s.d, pk)) * s.u * s.v
    return (
        -infection,
        infection - mp.delta * s.i,
        mp.p * s.i - mp.c * s.v,
        -pk.delta_d * s.d,
    )


def reproduction_number(mp: ModelParams) -> ReproductionNumber:
    r = mp.beta * mp.p / (mp.c * mp.delta)
    return ReproductionNumber(r=r, u_star=1.0 / r)


def reproduction_number_t(mp: ModelParams, eta_now: float) -> float:
    """Reproduction number under instantaneous drug efficacy ``eta_now``."""
    if not 0 <= eta_now < 1:
        raise ValueError(f"eta_now must be in [0, 1), got {eta_now!r}")
    return mp.beta * (1.0 - eta_now) * mp.p / (mp.c * mp.delta)
