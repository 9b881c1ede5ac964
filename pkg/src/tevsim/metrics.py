"""Evaluation indices against the charge-on-arrival base case."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .ev_model import AgentConfig, HourKind, hour_kind

log = logging.getLogger(__name__)

EPS_FULL_FRACTION = 0.01


@dataclass
class BaseTrace:
    e_in: np.ndarray       # battery-side kWh per hour
    metered: np.ndarray    # billed kWh per hour
    soc: np.ndarray        # SOC at the end of each hour
    bill: float


def greedy_charging(agent: AgentConfig, hours: int, start_hour: int = 0,
                    initial_soc: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Charge at the full rating in every plugged-in hour until the battery is
    full; returns battery-side energy and end-of-hour SOC per hour."""
    spec = agent.spec
    half = 0.5 * agent.schedule.drive_energy(spec)
    soc = spec.c_max if initial_soc is None else initial_soc
    e_in = np.zeros(hours)
    socs = np.zeros(hours)
    for k in range(hours):
        kind = hour_kind(agent.schedule, start_hour + k)
        drain = half if kind in (HourKind.ARRIVAL, HourKind.DEPARTURE) else 0.0
        if kind in (HourKind.ARRIVAL, HourKind.PARKED):
            e_in[k] = max(0.0, min(spec.max_battery_in, spec.c_max - soc + drain))
        soc = soc + e_in[k] - drain
        socs[k] = soc
    return e_in, socs


def base_case_sim(agent: AgentConfig, price_trace: np.ndarray, start_hour: int = 0,
                  initial_soc: float | None = None, billed_from: int = 0) -> BaseTrace:
    """Greedy charging over ``len(price_trace)`` hours, billed at ``price_trace``
    from hour index ``billed_from`` on."""
    prices = np.asarray(price_trace, dtype=float)
    e_in, soc = greedy_charging(agent, prices.size, start_hour, initial_soc)
    metered = e_in / agent.spec.eta_in
    bill = float(np.dot(prices[billed_from:], metered[billed_from:]))
    return BaseTrace(e_in=e_in, metered=metered, soc=soc, bill=bill)


def savings(bill_trans: float, bill_base: float) -> float:
    """Percent reduction of the bill relative to the base case."""
    if bill_base == 0:
        log.warning("base-case bill is zero; savings reported as 0")
        return 0.0
    return 100.0 * (bill_base - bill_trans) / bill_base


def full_hours(soc: np.ndarray, c_max: float, eps_full: float | None = None) -> int:
    eps = EPS_FULL_FRACTION * c_max if eps_full is None else eps_full
    return int(np.count_nonzero(np.asarray(soc) >= c_max - eps))


def amenity(soc_trans: np.ndarray, soc_base: np.ndarray, c_max: float,
            eps_full: float | None = None) -> float:
    """Fully-charged hours as a percentage of the base case's; ``nan`` when the
    base case is never full."""
    base = full_hours(soc_base, c_max, eps_full)
    if base == 0:
        log.warning("base case never reaches full charge; amenity undefined")
        return float("nan")
    return 100.0 * full_hours(soc_trans, c_max, eps_full) / base


def spearman(x, y) -> float:
    """Rank correlation; ``nan`` when either input is constant."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    res = stats.spearmanr(x, y)
    return float(res.statistic if hasattr(res, "statistic") else res[0])


@dataclass
class AgentReport:
    agent_id: str
    savings_pct: float
    amenity_pct: float
    slider: float
    arrival_hour: int
    charger_kw: float
    daily_miles: float
    total_bill_transactive: float
    total_bill_base: float


@dataclass
class SystemReport:
    peak_load_base: float
    peak_load_transactive: float
    peak_price_base: float
    peak_price_transactive: float
    ev_profile_base: np.ndarray
    ev_profile_transactive: np.ndarray
    load_profile_base: np.ndarray
    load_profile_transactive: np.ndarray
    ev_variance_base: float
    ev_variance_transactive: float
    convergence: dict = field(default_factory=dict)

    @property
    def peak_load_reduction(self) -> float:
        return self.peak_load_base - self.peak_load_transactive

    def to_dict(self) -> dict:
        return {
            "peak_load_base_kw": self.peak_load_base,
            "peak_load_transactive_kw": self.peak_load_transactive,
            "peak_price_base": self.peak_price_base,
            "peak_price_transactive": self.peak_price_transactive,
            "ev_variance_base": self.ev_variance_base,
            "ev_variance_transactive": self.ev_variance_transactive,
            "convergence": self.convergence,
        }


def system_report(base_run, trans_run) -> SystemReport:
    """Peak load (kW, five-minute resolution), peak RT price and EV profile
    variance over the measured window of two runs on the same time axis."""
    if base_run.measured.shape != trans_run.measured.shape:
        raise ValueError("runs are not aligned")
    w = base_run.measured
    lb, lt = base_run.load_kw[w], trans_run.load_kw[w]
    eb, et = base_run.ev_hourly.sum(axis=0)[w], trans_run.ev_hourly.sum(axis=0)[w]
    return SystemReport(
        peak_load_base=float(lb.max()), peak_load_transactive=float(lt.max()),
        peak_price_base=float(base_run.rt_price[w].max()),
        peak_price_transactive=float(trans_run.rt_price[w].max()),
        ev_profile_base=eb, ev_profile_transactive=et,
        load_profile_base=lb.mean(axis=1), load_profile_transactive=lt.mean(axis=1),
        ev_variance_base=float(np.var(eb)), ev_variance_transactive=float(np.var(et)),
        convergence=dict(trans_run.convergence),
    )


def agent_reports(base_run, trans_run, eps_full_fraction: float = EPS_FULL_FRACTION) -> list[AgentReport]:
    w = base_run.measured
    out = []
    for i, ag in enumerate(trans_run.agents):
        c_max = ag.spec.c_max
        out.append(AgentReport(
            agent_id=ag.agent_id,
            savings_pct=savings(float(trans_run.bills[i]), float(base_run.bills[i])),
            amenity_pct=amenity(trans_run.soc[i, w], base_run.soc[i, w], c_max, eps_full_fraction * c_max),
            slider=ag.slider, arrival_hour=ag.schedule.t_in, charger_kw=ag.spec.charge_rating,
            daily_miles=ag.schedule.daily_miles,
            total_bill_transactive=float(trans_run.bills[i]),
            total_bill_base=float(base_run.bills[i]),
        ))
    return out
