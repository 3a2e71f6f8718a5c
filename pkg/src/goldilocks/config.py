"""Run configuration documents (JSON).

A document has nested sections mirroring the library types::

    {
      "model": {"beta": ..., "delta": ..., "p": ..., "c": ...},
      "pkpd": {"delta_d": ..., "ec50": ..., "period_t": 1, "u_max": 1000, "eta_max": 0.99},
      "initial_state": {"u": ..., "i": ..., "v": ..., "d": 0},
      "plan": {"t_i": 4, "t_f": 30, "dose": 20},      # or "schedule": {"impulses": [[t, u], ...]}
      "horizon": 1000,
      "integrator": {"rtol": 1e-9, "atol": 1e-12},
      "output": {"dir": "out", "prefix": "run", "dt": 0.1},
      "qss": {"eps_v": 0.01, "eps_i": 0.01, "tol_u": 0.02},
      "phase": {"u_min": 0, "u_max": ..., "v_min": 0, "v_max": ..., "nu": 201, "nv": 201},
      "seed": 0
    }

Only "model" and "initial_state" are required. Unknown keys are rejected.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .integrator import DEFAULT_ATOL, DEFAULT_DT, DEFAULT_RTOL, LONG_HORIZON, DoseSchedule
from .model import HostState, ModelParams, PkPdParams
from .planner import QssThresholds, SingleIntervalPlan, build_schedule

OUT_ENV = "GOLDILOCKS_OUT"
PATIENT_A_CONFIG = "patient_a.config"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorSettings:
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "."
    prefix: str = "run"
    dt: float = DEFAULT_DT


@dataclass(frozen=True)
class PhaseWindow:
    u_min: float | None = None
    u_max: float | None = None
    v_min: float = 0.0
    v_max: float | None = None
    nu: int = 201
    nv: int = 201


@dataclass(frozen=True)
class PlanSpec:
    t_i: float
    t_f: float
    dose: float


@dataclass(frozen=True)
class ScheduleSpec:
    impulses: list = field(default_factory=list)


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    initial_state: HostState
    pkpd: PkPdParams | None = None
    plan: PlanSpec | None = None
    schedule: ScheduleSpec | None = None
    horizon: float = LONG_HORIZON
    t0: float = 0.0
    integrator: IntegratorSettings = IntegratorSettings()
    output: OutputSettings = OutputSettings()
    qss: QssThresholds = QssThresholds()
    phase: PhaseWindow = PhaseWindow()
    seed: int = 0

    def pk(self) -> PkPdParams:
        if self.pkpd is None:
            raise ConfigError("missing section 'pkpd' (needed for treatment)")
        return self.pkpd

    def single_plan(self) -> SingleIntervalPlan | None:
        if self.plan is None:
            return None
        period = self.pkpd.period_t if self.pkpd else 1.0
        return SingleIntervalPlan(self.plan.t_i, self.plan.t_f, self.plan.dose, period)

    def dose_schedule(self, horizon: float | None = None) -> DoseSchedule:
        horizon = self.horizon if horizon is None else horizon
        if self.plan is not None:
            return build_schedule(self.single_plan(), max(horizon, self.plan.t_f))
        if self.schedule is not None:
            return DoseSchedule(tuple(tuple(x) for x in self.schedule.impulses), horizon)
        return DoseSchedule.empty(horizon)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            out[f.name] = asdict(value) if hasattr(value, "__dataclass_fields__") else value
        return out


_SECTIONS = {
    "model": ModelParams,
    "initial_state": HostState,
    "pkpd": PkPdParams,
    "plan": PlanSpec,
    "schedule": ScheduleSpec,
    "integrator": IntegratorSettings,
    "output": OutputSettings,
    "qss": QssThresholds,
    "phase": PhaseWindow,
}
_SCALARS = {"horizon": float, "t0": float, "seed": int}
_REQUIRED = ("model", "initial_state")


def _section(name, cls, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be an object")
    allowed = {f.name for f in fields(cls)}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key '{name}.{key}'")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"'{name}': {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"'{name}': {exc}") from None


def parse_config(doc: dict) -> RunConfig:
    """Validate a decoded document and build a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    for key in doc:
        if key not in _SECTIONS and key not in _SCALARS:
            raise ConfigError(f"unknown key '{key}'")
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(f"missing required section '{key}'")
    if "plan" in doc and "schedule" in doc:
        raise ConfigError("'plan' and 'schedule' are mutually exclusive")

    kwargs = {name: _section(name, cls, doc[name]) for name, cls in _SECTIONS.items() if name in doc}
    for key, kind in _SCALARS.items():
        if key in doc:
            value = doc[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"'{key}' must be a number")
            if kind is int and value != int(value):
                raise ConfigError(f"'{key}' must be an integer")
            kwargs[key] = kind(value)

    cfg = RunConfig(**kwargs)
    if not cfg.horizon > cfg.t0:
        raise ConfigError("'horizon' must exceed 't0'")
    if cfg.output.dt <= 0:
        raise ConfigError("'output.dt' must be > 0")
    if cfg.plan is not None:
        try:
            cfg.single_plan()
        except ValueError as exc:
            raise ConfigError(f"'plan': {exc}") from None
        if cfg.pkpd is None:
            raise ConfigError("'plan' needs a 'pkpd' section")
        if cfg.plan.dose > cfg.pkpd.u_max:
            raise ConfigError("'plan.dose' exceeds 'pkpd.u_max'")
    if cfg.schedule is not None:
        try:
            cfg.dose_schedule()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"'schedule.impulses': {exc}") from None
        if cfg.pkpd is None:
            raise ConfigError("'schedule' needs a 'pkpd' section")
        if any(u > cfg.pkpd.u_max for _, u in cfg.schedule.impulses):
            raise ConfigError("'schedule.impulses': dose exceeds 'pkpd.u_max'")
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


def patient_a_document() -> dict:
    """The bundled patient A document."""
    text = resources.files("goldilocks.data").joinpath(PATIENT_A_CONFIG).read_text()
    return json.loads(text)


def load_patient_a() -> RunConfig:
    return parse_config(patient_a_document())


def output_dir(cfg: RunConfig, override: str | None = None) -> Path:
    """--out beats the environment override, which beats the config."""
    return Path(override or os.environ.get(OUT_ENV) or cfg.output.dir)
