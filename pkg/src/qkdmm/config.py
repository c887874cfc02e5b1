"""JSON scenario configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ChannelParams
from .detectors import ACTIVE, PASSIVE, ReceiverSpec, mismatch_model, uniform_receiver

ALLOWED_MODES = {ACTIVE: (1, 2), PASSIVE: (1, 4)}
SWEEP_PARAMETERS = ("eta2", "distance_km", "eta_all")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class Mismatch:
    eta1: float = 1.0
    eta2: float = 1.0
    mode_dependent: bool = True


@dataclass(frozen=True)
class SimSettings:
    """Channel settings. ``t_eta`` fixes the product of transmission and efficiency."""

    omega: float = 0.05
    r: float = 0.05
    t: float | None = None
    distance_km: float | None = None
    t_eta: float | None = None
    m_resend: int = 2


@dataclass(frozen=True)
class AnalysisSettings:
    mode: str = "flag"
    flag_k: int = 2
    cutoff_n: int = 2
    n_max_bounds: int = 6
    fw_max_iter: int = 300
    fw_gap_tol: float = 1e-6
    conic_tol: float = 1e-10
    epsilon: float = 1e-12
    warm_start: bool = True
    f_ec: float = 1.0


@dataclass(frozen=True)
class SweepSettings:
    parameter: str
    start: float
    stop: float
    steps: int

    def values(self) -> list[float]:
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]


@dataclass(frozen=True)
class ScenarioConfig:
    scheme: str
    M: int = 1
    mismatch: Mismatch = field(default_factory=Mismatch)
    sim: SimSettings = field(default_factory=SimSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    sweep: SweepSettings | None = None

    def receiver(self) -> ReceiverSpec:
        m = self.mismatch
        if m.eta1 == m.eta2:
            return uniform_receiver(self.scheme, m.eta1, self.M)
        # a single spatial mode has no mode dependence to speak of
        return mismatch_model(self.scheme, m.eta1, m.eta2, self.M, m.mode_dependent and self.M > 1)

    def channel(self) -> ChannelParams:
        s = self.sim
        if s.distance_km is not None:
            return ChannelParams(s.omega, r=s.r, m_resend=s.m_resend, distance_km=s.distance_km)
        if s.t_eta is not None:
            eta = self.mismatch.eta1
            if s.t_eta > eta:
                raise ConfigError(f"t_eta={s.t_eta} exceeds eta1={eta}")
            return ChannelParams(s.omega, s.t_eta / eta, s.r, s.m_resend)
        return ChannelParams(s.omega, 1.0 if s.t is None else s.t, s.r, s.m_resend)

    def at(self, value: float) -> ScenarioConfig:
        """Copy with the sweep parameter set to ``value``."""
        if self.sweep is None:
            raise ConfigError("no sweep section")
        p = self.sweep.parameter
        if p == "eta2":
            cfg = replace(self, mismatch=replace(self.mismatch, eta2=value))
        elif p == "eta_all":
            cfg = replace(self, mismatch=replace(self.mismatch, eta1=value, eta2=value))
        else:
            cfg = replace(self, sim=replace(self.sim, distance_km=value, t=None, t_eta=None))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if self.scheme not in ALLOWED_MODES:
            raise ConfigError(f"scheme must be one of {sorted(ALLOWED_MODES)}")
        if self.M not in ALLOWED_MODES[self.scheme]:
            raise ConfigError(f"{self.scheme} scheme supports M in {ALLOWED_MODES[self.scheme]}")
        m = self.mismatch
        if not (0 <= m.eta2 <= m.eta1 <= 1):
            raise ConfigError("need 0 <= eta2 <= eta1 <= 1")
        s = self.sim
        for name in ("omega", "r"):
            if not 0 <= getattr(s, name) <= 1:
                raise ConfigError(f"sim.{name} must lie in [0, 1]")
        given = [x is not None for x in (s.t, s.distance_km, s.t_eta)]
        if sum(given) > 1:
            raise ConfigError("give at most one of sim.t, sim.distance_km, sim.t_eta")
        if s.t is not None and not 0 <= s.t <= 1:
            raise ConfigError("sim.t must lie in [0, 1]")
        if s.distance_km is not None and s.distance_km < 0:
            raise ConfigError("sim.distance_km must be >= 0")
        if s.t_eta is not None and not 0 < s.t_eta <= 1:
            raise ConfigError("sim.t_eta must lie in (0, 1]")
        if s.m_resend != 2:
            raise ConfigError("only sim.m_resend = 2 is supported")
        a = self.analysis
        if a.mode not in ("flag", "cutoff"):
            raise ConfigError("analysis.mode must be 'flag' or 'cutoff'")
        if a.flag_k not in (1, 2):
            raise ConfigError("analysis.flag_k must be 1 or 2")
        if a.cutoff_n < 2:
            raise ConfigError("analysis.cutoff_n must be >= 2 (the simulated support)")
        if a.n_max_bounds < 1:
            raise ConfigError("analysis.n_max_bounds must be >= 1")
        if a.fw_max_iter < 0 or a.fw_gap_tol <= 0 or a.conic_tol <= 0 or a.epsilon <= 0:
            raise ConfigError("solver tolerances must be positive")
        if self.sweep is not None:
            w = self.sweep
            if w.parameter not in SWEEP_PARAMETERS:
                raise ConfigError(f"sweep.parameter must be one of {SWEEP_PARAMETERS}")
            if w.steps < 1:
                raise ConfigError("sweep.steps must be >= 1")
        try:
            self.receiver()
            self.channel()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = set(cls.__dataclass_fields__)
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad section {name!r}: {exc}") from None


def from_dict(raw: dict) -> ScenarioConfig:
    """Build and validate a config from parsed JSON.

    The sweep section uses the keys ``parameter``, ``from``, ``to`` and ``steps``.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(raw) - {"scheme", "M", "mismatch", "sim", "analysis", "sweep"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    if "scheme" not in raw:
        raise ConfigError("missing 'scheme'")
    sweep = None
    if raw.get("sweep") is not None:
        w = raw["sweep"]
        try:
            sweep = SweepSettings(w["parameter"], float(w["from"]), float(w["to"]), int(w["steps"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad sweep section: {exc}") from None
    cfg = ScenarioConfig(
        scheme=raw["scheme"],
        M=raw.get("M", 1),
        mismatch=_section(Mismatch, raw.get("mismatch"), "mismatch"),
        sim=_section(SimSettings, raw.get("sim"), "sim"),
        analysis=_section(AnalysisSettings, raw.get("analysis"), "analysis"),
        sweep=sweep,
    )
    cfg.validate()
    return cfg


def load(path: str | Path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return from_dict(raw)
