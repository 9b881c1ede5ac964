"""EV physical parameters, driving patterns, fleet synthesis and SOC physics.

Energies are kWh per one-hour step unless stated otherwise. Battery-side
energies (``e_in``, ``e_out``) differ from metered, billing-side energies by
the charger efficiencies.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

log = logging.getLogger(__name__)

C_MIN_FRACTION = 0.05
DEFAULT_EFFICIENCY = 0.9
MAX_PAIRING_ATTEMPTS = 10_000


class CatalogError(ValueError):
    pass


class FleetError(RuntimeError):
    pass


class PhysicsViolation(RuntimeError):
    """SOC left [C_min, C_max]; indicates a scheduler or control bug."""


@dataclass(frozen=True)
class EvSpec:
    model_name: str
    range_miles: float
    mileage: float
    charge_rating: float
    discharge_rating: float = 0.0
    eta_in: float = DEFAULT_EFFICIENCY
    eta_out: float = DEFAULT_EFFICIENCY
    sale_weight: float = 1.0

    def __post_init__(self):
        if not self.range_miles > 0 or not self.mileage > 0:
            raise ValueError(f"{self.model_name}: range and mileage must be positive")
        if not self.charge_rating > 0 or self.discharge_rating < 0:
            raise ValueError(f"{self.model_name}: invalid charger ratings")
        if not (0 < self.eta_in <= 1 and 0 < self.eta_out <= 1):
            raise ValueError(f"{self.model_name}: efficiencies must lie in (0, 1]")
        if self.sale_weight < 0:
            raise ValueError(f"{self.model_name}: negative sale weight")

    @property
    def c_max(self) -> float:
        """Usable battery capacity, range over mileage (kWh)."""
        return self.range_miles / self.mileage

    @property
    def c_min(self) -> float:
        return C_MIN_FRACTION * self.c_max

    @property
    def max_battery_in(self) -> float:
        """Largest battery-side energy per hour; the rating limits metered draw."""
        return self.charge_rating * self.eta_in

    @property
    def max_battery_out(self) -> float:
        return self.discharge_rating / self.eta_out

    def as_v1g(self) -> "EvSpec":
        return replace(self, discharge_rating=0.0)


@dataclass(frozen=True)
class DrivingSchedule:
    t_in: int
    t_out: int
    daily_miles: float

    def __post_init__(self):
        if not (0 <= self.t_in < 24 and 0 <= self.t_out < 24):
            raise ValueError("t_in and t_out must be hour indices 0..23")
        if self.t_in == self.t_out:
            raise ValueError("t_in must differ from t_out")
        if not self.daily_miles > 0:
            raise ValueError("daily_miles must be positive")

    @property
    def plug_duration(self) -> int:
        """Hours plugged in per day, wrapping midnight."""
        return (self.t_out - self.t_in) % 24

    def drive_energy(self, spec: EvSpec) -> float:
        return self.daily_miles / spec.mileage


@dataclass(frozen=True)
class AgentConfig:
    spec: EvSpec
    schedule: DrivingSchedule
    slider: float
    inconvenience_rate: float = 0.03
    smoothing_coeff: float = 0.001
    degradation_rate: float = 0.0
    agent_id: str = "ev0"

    def __post_init__(self):
        if not 0.0 <= self.slider <= 1.0:
            raise ValueError("slider must lie in [0, 1]")
        if min(self.inconvenience_rate, self.smoothing_coeff, self.degradation_rate) < 0:
            raise ValueError("alpha, beta and phi must be non-negative")


class HourKind(enum.IntEnum):
    AWAY = 0
    PARKED = 1
    ARRIVAL = 2
    DEPARTURE = 3


@dataclass(frozen=True)
class HorizonSets:
    """Index sets for an ``horizon_len``-hour window starting at ``start_hour``."""
    horizon_len: int
    trans_hours: np.ndarray
    arrival_hours: np.ndarray
    departure_hours: np.ndarray
    start_hour: int = 0

    @property
    def trans_mask(self) -> np.ndarray:
        mask = np.zeros(self.horizon_len, dtype=bool)
        mask[self.trans_hours] = True
        return mask

    def kinds(self) -> np.ndarray:
        kinds = np.full(self.horizon_len, HourKind.AWAY, dtype=np.int64)
        kinds[self.trans_hours] = HourKind.PARKED
        kinds[self.arrival_hours] = HourKind.ARRIVAL
        kinds[self.departure_hours] = HourKind.DEPARTURE
        return kinds


@dataclass(frozen=True)
class EvState:
    soc: float
    c_max: float
    c_min: float
    hour_energy_in: float = 0.0
    hour_energy_out: float = 0.0

    @classmethod
    def full(cls, spec: EvSpec) -> "EvState":
        return cls(soc=spec.c_max, c_max=spec.c_max, c_min=spec.c_min)


# ---------------------------------------------------------------------------
# catalog and schedule ingestion

_CATALOG_REQUIRED = ("model", "sale_pct", "range_miles", "charger_kw", "miles_per_kwh")


def _parse_number(text: str, row: int, column: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise CatalogError(f"row {row}, column {column!r}: cannot parse {text!r}") from None


def _parse_share(text: str, row: int) -> float:
    text = (text or "").strip()
    if text.endswith("%"):
        return _parse_number(text[:-1], row, "sale_pct") / 100.0
    return _parse_number(text, row, "sale_pct")


def _open_text(source) -> TextIO:
    if isinstance(source, (str, Path)):
        return open(source, newline="")
    return source


def load_ev_catalog(source, v2g: bool = False) -> list[EvSpec]:
    """Parse an EV catalog CSV.

    Args:
        source: path or text stream with columns
            ``model,sale_pct,range_miles,charger_kw,miles_per_kwh`` and optional
            ``discharge_kw,eta_in,eta_out``.
        v2g: when the discharge column is absent, use the charger rating as the
            discharge rating (otherwise 0).

    Sale percentages such as ``44.11%`` become fractions; bare numbers are kept
    as given. Weights are normalised only when sampling.
    """
    stream = _open_text(source)
    try:
        reader = csv.DictReader(stream, skipinitialspace=True)
        if reader.fieldnames is None:
            raise CatalogError("empty catalog")
        fields = [f.strip() for f in reader.fieldnames]
        missing = [c for c in _CATALOG_REQUIRED if c not in fields]
        if missing:
            raise CatalogError(f"catalog header missing columns: {', '.join(missing)}")
        specs = []
        for i, raw in enumerate(reader, start=2):
            row = {k.strip(): (v.strip() if isinstance(v, str) else v) for k, v in raw.items() if k}
            charger = _parse_number(row["charger_kw"], i, "charger_kw")
            if row.get("discharge_kw"):
                discharge = _parse_number(row["discharge_kw"], i, "discharge_kw")
            else:
                discharge = charger if v2g else 0.0
            eta_in = _parse_number(row["eta_in"], i, "eta_in") if row.get("eta_in") else DEFAULT_EFFICIENCY
            eta_out = _parse_number(row["eta_out"], i, "eta_out") if row.get("eta_out") else DEFAULT_EFFICIENCY
            try:
                specs.append(EvSpec(
                    model_name=row["model"],
                    range_miles=_parse_number(row["range_miles"], i, "range_miles"),
                    mileage=_parse_number(row["miles_per_kwh"], i, "miles_per_kwh"),
                    charge_rating=charger,
                    discharge_rating=discharge,
                    eta_in=eta_in,
                    eta_out=eta_out,
                    sale_weight=_parse_share(row["sale_pct"], i),
                ))
            except ValueError as exc:
                if isinstance(exc, CatalogError):
                    raise
                raise CatalogError(f"row {i}: {exc}") from None
    finally:
        if stream is not source:
            stream.close()
    if not specs:
        raise CatalogError("empty catalog")
    return specs


def default_catalog(v2g: bool = False) -> list[EvSpec]:
    """The bundled top-15 US EV sales catalog (2016-2019)."""
    text = resources.files("tevsim.data").joinpath("ev_catalog.csv").read_text()
    return load_ev_catalog(io.StringIO(text), v2g=v2g)


def load_schedules(source) -> list[DrivingSchedule]:
    """Parse a schedule CSV with columns ``t_in,t_out,daily_miles``."""
    stream = _open_text(source)
    try:
        reader = csv.DictReader(stream, skipinitialspace=True)
        if reader.fieldnames is None:
            raise CatalogError("empty schedule file")
        out = []
        for i, row in enumerate(reader, start=2):
            try:
                out.append(DrivingSchedule(
                    t_in=int(_parse_number(row["t_in"], i, "t_in")),
                    t_out=int(_parse_number(row["t_out"], i, "t_out")),
                    daily_miles=_parse_number(row["daily_miles"], i, "daily_miles"),
                ))
            except (KeyError, ValueError) as exc:
                raise CatalogError(f"row {i}: {exc}") from None
    finally:
        if stream is not source:
            stream.close()
    if not out:
        raise CatalogError("empty schedule file")
    return out


def write_schedules(schedules: Iterable[DrivingSchedule], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["t_in", "t_out", "daily_miles"])
    for s in schedules:
        writer.writerow([s.t_in, s.t_out, repr(float(s.daily_miles))])


# Commuter arrivals cluster at 17-19h and departures at 7-9h; a minority of
# home-day owners arrive late morning or afternoon.
_ARRIVAL_WEIGHTS = np.array([
    0.2, 0.1, 0.1, 0.1, 0.1, 0.2, 0.3, 0.4, 0.6, 1.0, 1.4, 1.6,
    1.6, 1.6, 1.8, 2.5, 4.5, 9.0, 11.0, 9.0, 5.0, 3.0, 1.5, 0.6,
])
_DEPARTURE_WEIGHTS = np.array([
    0.1, 0.1, 0.1, 0.2, 0.4, 1.2, 4.0, 9.0, 10.0, 8.0, 3.5, 1.5,
    0.8, 0.5, 0.4, 0.4, 0.3, 0.3, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1,
])


def synthetic_schedules(n: int, rng_seed: int = 0, median_miles: float = 25.0,
                        sigma: float = 0.6) -> list[DrivingSchedule]:
    """Seeded stand-in for a travel-survey sampling pool."""
    rng = np.random.default_rng(rng_seed)
    p_in = _ARRIVAL_WEIGHTS / _ARRIVAL_WEIGHTS.sum()
    p_out = _DEPARTURE_WEIGHTS / _DEPARTURE_WEIGHTS.sum()
    out = []
    while len(out) < n:
        t_in = int(rng.choice(24, p=p_in))
        t_out = int(rng.choice(24, p=p_out))
        if t_in == t_out:
            continue
        miles = float(np.clip(median_miles * math.exp(sigma * rng.standard_normal()), 2.0, 200.0))
        out.append(DrivingSchedule(t_in, t_out, round(miles, 1)))
    return out


# ---------------------------------------------------------------------------
# fleet synthesis

@dataclass(frozen=True)
class SliderDist:
    """Slider distribution: ``uniform[:lo,hi]``, ``fixed:v`` or ``stratified:v1,v2,...``.

    ``stratified`` cycles through the listed values in order.
    """
    kind: str = "uniform"
    values: tuple = (0.0, 1.0)

    @classmethod
    def parse(cls, text: str) -> "SliderDist":
        kind, _, rest = text.strip().partition(":")
        kind = kind.strip().lower()
        vals = tuple(float(v) for v in rest.split(",") if v.strip()) if rest else ()
        if kind == "uniform":
            return cls("uniform", vals or (0.0, 1.0))
        if kind == "fixed" and len(vals) == 1:
            return cls("fixed", vals)
        if kind == "stratified" and vals:
            return cls("stratified", vals)
        raise ValueError(f"bad slider distribution {text!r}")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            lo, hi = self.values
            return rng.uniform(lo, hi, n)
        if self.kind == "fixed":
            return np.full(n, self.values[0])
        return np.array([self.values[i % len(self.values)] for i in range(n)])

    def __str__(self):
        return f"{self.kind}:{','.join(repr(v) for v in self.values)}"


def pairing_feasible(spec: EvSpec, schedule: DrivingSchedule) -> bool:
    """Fleet screen: trip within range, charge window long enough, and the
    daily drain never takes a full battery below its reserve."""
    drive = schedule.drive_energy(spec)
    return (schedule.daily_miles < spec.range_miles
            and schedule.plug_duration * spec.max_battery_in > spec.c_max
            and spec.c_max - drive >= spec.c_min)


def synthesize_fleet(catalog: Sequence[EvSpec], schedules: Sequence[DrivingSchedule], n: int,
                     rng_seed: int, slider_dist: SliderDist | str = "uniform",
                     inconvenience_rate: float = 0.03, smoothing_coeff: float = 0.001,
                     degradation_rate: float = 0.0) -> list[AgentConfig]:
    """Draw ``n`` agents: model by sale weight, schedule by rejection resampling."""
    if n < 1:
        raise FleetError("fleet size must be at least 1")
    if not catalog or not schedules:
        raise FleetError("catalog and schedule pool must be non-empty")
    if isinstance(slider_dist, str):
        slider_dist = SliderDist.parse(slider_dist)
    rng = np.random.default_rng(rng_seed)
    weights = np.array([s.sale_weight for s in catalog], dtype=float)
    if weights.sum() <= 0:
        raise FleetError("catalog sale weights sum to zero")
    weights = weights / weights.sum()
    sliders = slider_dist.sample(n, rng)
    agents = []
    for i in range(n):
        spec = catalog[int(rng.choice(len(catalog), p=weights))]
        for _ in range(MAX_PAIRING_ATTEMPTS):
            sched = schedules[int(rng.integers(len(schedules)))]
            if pairing_feasible(spec, sched):
                break
        else:
            raise FleetError(f"no feasible schedule for {spec.model_name} after "
                             f"{MAX_PAIRING_ATTEMPTS} attempts")
        agents.append(AgentConfig(
            spec=spec, schedule=sched, slider=float(sliders[i]),
            inconvenience_rate=inconvenience_rate, smoothing_coeff=smoothing_coeff,
            degradation_rate=degradation_rate, agent_id=f"ev{i:03d}",
        ))
    return agents


# ---------------------------------------------------------------------------
# physics

def hour_kind(schedule: DrivingSchedule, abs_hour: int) -> HourKind:
    hod = abs_hour % 24
    if hod == schedule.t_out:
        return HourKind.DEPARTURE
    if hod == schedule.t_in:
        return HourKind.ARRIVAL
    if (hod - schedule.t_in) % 24 < schedule.plug_duration:
        return HourKind.PARKED
    return HourKind.AWAY


def horizon_sets(schedule: DrivingSchedule, start_hour: int, n: int) -> HorizonSets:
    """Plugged-in, arrival and departure hour indices relative to ``start_hour``.

    Plugged-in hours run from arrival (inclusive) to departure (exclusive).
    """
    if n < 24:
        raise ValueError("horizon must cover at least one day")
    hods = (start_hour + np.arange(n)) % 24
    trans = np.flatnonzero((hods - schedule.t_in) % 24 < schedule.plug_duration)
    return HorizonSets(
        horizon_len=n,
        trans_hours=trans,
        arrival_hours=np.flatnonzero(hods == schedule.t_in),
        departure_hours=np.flatnonzero(hods == schedule.t_out),
        start_hour=start_hour,
    )


def metered_energy(e_in: float, e_out: float, spec: EvSpec) -> tuple[float, float]:
    """Billing-side energies: charging draws ``e_in/eta_in``, discharging
    delivers ``e_out*eta_out``."""
    return e_in / spec.eta_in, e_out * spec.eta_out


def step_soc(state: EvState, e_in: float, e_out: float, kind: HourKind, daily_miles: float,
             spec: EvSpec, fraction: float = 1.0, tol: float = 1e-9) -> EvState:
    """Advance the SOC by one step.

    ``fraction`` is the share of the hour covered by the step (1/12 for a
    five-minute slot); it scales only the driving drain, the energies are
    taken as given for the step. Half the daily driving energy is drawn at the
    departure and at the arrival hour. Charging is allowed in the arrival hour
    (the vehicle is plugged in), never in the departure or away hours.
    """
    if e_in < 0 or e_out < 0:
        raise ValueError("energies must be non-negative")
    if kind in (HourKind.AWAY, HourKind.DEPARTURE) and (e_in > 0 or e_out > 0):
        raise PhysicsViolation(f"energy exchanged while unplugged ({kind.name})")
    if e_in > spec.max_battery_in * fraction + tol or e_out > spec.max_battery_out * fraction + tol:
        raise PhysicsViolation("charger rating exceeded")
    delta = e_in - e_out
    if kind in (HourKind.ARRIVAL, HourKind.DEPARTURE):
        delta -= fraction * 0.5 * daily_miles / spec.mileage
    soc = state.soc + delta
    if soc < state.c_min - tol or soc > state.c_max + tol:
        raise PhysicsViolation(f"SOC {soc:.6f} outside [{state.c_min:.6f}, {state.c_max:.6f}]")
    soc = min(max(soc, state.c_min), state.c_max)
    return replace(state, soc=soc, hour_energy_in=e_in, hour_energy_out=e_out)
