"""Scenario configuration: nested YAML mapped onto dataclasses.

Every key is optional; unknown keys are rejected so typos surface early.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .ev_model import SliderDist


class ConfigError(ValueError):
    pass


@dataclass
class AgentParams:
    slider_dist: str = "stratified:0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    alpha: float = 0.03           # inconvenience rate, $/kWh per hour not full
    beta: float = 0.001           # smoothing coefficient, $/kWh^2
    phi: float = 0.0              # degradation rate, $/kWh throughput
    deadband: float = 0.002       # bid deadband, $/kWh
    eta_in: float = 0.9
    eta_out: float = 0.9


@dataclass
class SupplyParams:
    base_price: float = 0.03      # a, $/kWh
    slope_per_house: float = 0.04  # b * houses, $/kWh per kWh
    feeder_limit_per_house: float = 5.0  # Q_max / houses, kWh per hour
    surcharge: float = 0.05       # s, $/kWh
    evening_bump: float = 0.3


@dataclass
class InflexibleParams:
    houses_per_ev: float = 530 / 160
    base_kwh: float = 0.8
    morning_kwh: float = 0.6
    evening_kwh: float = 1.4
    rt_noise: float = 0.05        # +- fraction on RT actuals; 0 disables


@dataclass
class MetricsParams:
    warmup_days: int = 2
    eps_full_fraction: float = 0.01
    convergence_eps: float = 0.001
    convergence_k: int = 6


@dataclass
class ScenarioConfig:
    days: int = 7
    fleet_size: int = 20
    seed: int = 1
    mode: str = "V1G"
    horizon: int = 48
    resolve_every: int = 1        # re-solve the plan every k-th DA round
    forecast_relaxation: float = 0.5  # share of each new cleared price passed to agents
    schedule_pool: int = 2000
    catalog: str | None = None    # CSV path; bundled catalog when unset
    schedules: str | None = None  # CSV path; synthetic pool when unset
    output_dir: str = "tevsim_out"
    phi_sweep: list = field(default_factory=lambda: [0.0, 0.005, 0.008, 0.015])
    agents: AgentParams = field(default_factory=AgentParams)
    supply: SupplyParams = field(default_factory=SupplyParams)
    inflexible: InflexibleParams = field(default_factory=InflexibleParams)
    metrics: MetricsParams = field(default_factory=MetricsParams)

    def validate(self) -> "ScenarioConfig":
        m = self.metrics
        if self.days < m.warmup_days + 1:
            raise ConfigError(f"days must be at least warm-up + 1 ({m.warmup_days + 1})")
        if self.fleet_size < 1:
            raise ConfigError("fleet_size must be at least 1")
        if self.mode not in ("V1G", "V2G"):
            raise ConfigError("mode must be V1G or V2G")
        if self.horizon < 24:
            raise ConfigError("horizon must be at least 24 hours")
        if not 0 < self.forecast_relaxation <= 1:
            raise ConfigError("forecast_relaxation must lie in (0, 1]")
        if self.resolve_every < 1:
            raise ConfigError("resolve_every must be at least 1")
        a = self.agents
        if min(a.alpha, a.beta, a.phi, a.deadband) < 0:
            raise ConfigError("alpha, beta, phi and deadband must be non-negative")
        if not (0 < a.eta_in <= 1 and 0 < a.eta_out <= 1):
            raise ConfigError("efficiencies must lie in (0, 1]")
        try:
            SliderDist.parse(a.slider_dist)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        s = self.supply
        if s.base_price < 0 or s.slope_per_house < 0 or s.feeder_limit_per_house <= 0 or s.surcharge < 0:
            raise ConfigError("supply needs a >= 0, b >= 0, Q_max > 0, s >= 0")
        if not 0 <= self.inflexible.rt_noise < 1:
            raise ConfigError("rt_noise must lie in [0, 1)")
        if m.convergence_k < 2:
            raise ConfigError("convergence_k must be at least 2")
        return self

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with top-level or dotted (``agents.beta``) keys overridden."""
        out = dataclasses.replace(self)
        for key, value in changes.items():
            section, _, name = key.rpartition(".")
            target = out
            if section:
                sub = dataclasses.replace(getattr(out, section))
                setattr(out, section, sub)
                target = sub
            if not hasattr(target, name):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(target, name, value)
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {"agents": AgentParams, "supply": SupplyParams, "inflexible": InflexibleParams,
             "metrics": MetricsParams}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS and cls is ScenarioConfig:
            kwargs[key] = _build(_SECTIONS[key], value or {}, key)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict | None) -> ScenarioConfig:
    return _build(ScenarioConfig, data or {}, "").validate()


def load_config(path: str | Path | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig().validate()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
