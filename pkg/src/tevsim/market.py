"""Retail market operator: price forecasts, bid aggregation and clearing.

Clearing intersects the aggregate demand (inflexible load plus the agents'
four-point bids) with an affine supply curve by bisection on price. The
excess-demand evaluation is the hot kernel; it exists as a numba loop and as
a vectorised numpy expression with identical semantics.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._accel import USE_NUMBA, njit
from .bidding import bids_to_arrays

log = logging.getLogger(__name__)

PRICE_TOL = 1e-7
EMA_DECAY = 0.5
DA_HORIZON = 48


class ClearingError(RuntimeError):
    """Demand and supply do not intersect inside the admissible price range."""


@dataclass(frozen=True)
class SupplyCurve:
    """Marginal price ``a(t) + b*Q``; ``a(t)`` optionally carries an evening bump."""
    base_price: float
    slope: float
    feeder_limit: float
    surcharge: float = 0.05
    evening_bump: float = 0.0

    def __post_init__(self):
        if self.slope < 0 or self.feeder_limit <= 0 or self.surcharge < 0:
            raise ValueError("supply needs b >= 0, Q_max > 0, s >= 0")

    def intercept(self, hour: int | None = None) -> float:
        if hour is None or self.evening_bump == 0.0:
            return self.base_price
        return self.base_price * (1.0 + self.evening_bump * evening_shape(hour))

    def price_at(self, quantity: float, hour: int | None = None) -> float:
        return self.intercept(hour) + self.slope * quantity

    def per_slot(self, slots: int = 12) -> "SupplyCurve":
        """Same marginal prices for energy measured per 1/slots of an hour."""
        return SupplyCurve(self.base_price, self.slope * slots, self.feeder_limit / slots,
                           self.surcharge, self.evening_bump)


def evening_shape(hour: int) -> float:
    """Smooth 0..1 bump centred on 19:00."""
    d = ((hour % 24) - 19 + 12) % 24 - 12
    return float(np.exp(-0.5 * (d / 2.0) ** 2))


# ---------------------------------------------------------------------------
# inflexible household load

@dataclass(frozen=True)
class InflexibleProfile:
    """Aggregate non-EV household load: per-house diurnal shape times houses."""
    houses: int
    base_kwh: float = 0.8
    morning_kwh: float = 0.6
    evening_kwh: float = 1.4
    noise: float = 0.05

    def hourly(self, hours: np.ndarray) -> np.ndarray:
        h = np.asarray(hours) % 24
        morning = np.exp(-0.5 * ((h - 7.5) / 1.5) ** 2)
        dist = (h - 19 + 12) % 24 - 12
        evening = np.exp(-0.5 * (dist / 2.0) ** 2)
        return self.houses * (self.base_kwh + self.morning_kwh * morning + self.evening_kwh * evening)

    def slot_actual(self, hour: int, rng: np.random.Generator | None, slots: int = 12) -> np.ndarray:
        """Per-slot energy for one hour; seeded +-noise when ``rng`` is given."""
        base = np.full(slots, float(self.hourly(np.array([hour]))[0]) / slots)
        if rng is None or self.noise == 0.0:
            return base
        return base * (1.0 + rng.uniform(-self.noise, self.noise, size=slots))


# ---------------------------------------------------------------------------
# demand evaluation kernels

@njit
def _demand_nb(P, Q, inflexible, price):
    total = inflexible
    for i in range(P.shape[0]):
        p1, p2, p3, p4 = P[i, 0], P[i, 1], P[i, 2], P[i, 3]
        q1, q2, q3, q4 = Q[i, 0], Q[i, 1], Q[i, 2], Q[i, 3]
        if p3 <= price <= p2:
            total += q2
        elif price >= p1:
            total += q1
        elif price > p2:
            total += q1 + (price - p1) * (q2 - q1) / (p2 - p1)
        elif price <= p4:
            total += q4
        else:
            total += q3 + (price - p3) * (q4 - q3) / (p4 - p3)
    return total


def _quantities_np(P, Q, price):
    p1, p2, p3, p4 = P[:, 0], P[:, 1], P[:, 2], P[:, 3]
    q1, q2, q3, q4 = Q[:, 0], Q[:, 1], Q[:, 2], Q[:, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = q1 + (price - p1) * (q2 - q1) / (p2 - p1)
        lower = q3 + (price - p3) * (q4 - q3) / (p4 - p3)
    out = np.where(price <= p4, q4, lower)
    out = np.where(price > p2, upper, out)
    out = np.where(price >= p1, q1, out)
    return np.where((p3 <= price) & (price <= p2), q2, out)


def _demand_np(P, Q, inflexible, price):
    return inflexible + float(np.sum(_quantities_np(P, Q, price)))


@njit
def _bisect_nb(P, Q, inflexible, a, b, lo, hi, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _demand_nb(P, Q, inflexible, mid) - (mid - a) / b > 0.0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _bisect_np(P, Q, inflexible, a, b, lo, hi, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _demand_np(P, Q, inflexible, mid) - (mid - a) / b > 0.0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def demand_at(P: np.ndarray, Q: np.ndarray, inflexible: float, price: float) -> float:
    if USE_NUMBA:
        return _demand_nb(P, Q, inflexible, price)
    return _demand_np(P, Q, inflexible, price)


def bisect_price(P, Q, inflexible, a, b, lo, hi, tol=PRICE_TOL):
    if USE_NUMBA:
        return _bisect_nb(P, Q, float(inflexible), a, b, lo, hi, tol)
    return _bisect_np(P, Q, float(inflexible), a, b, lo, hi, tol)


# ---------------------------------------------------------------------------

@dataclass
class DemandCurve:
    """Aggregate demand; quantities are evaluated from the stacked bid points."""
    prices: np.ndarray
    quantities: np.ndarray
    inflexible_load: float

    def quantity(self, price: float) -> float:
        return demand_at(self.prices, self.quantities, self.inflexible_load, price)

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        """``(price, total quantity)`` at every corner price, ascending in price."""
        corners = np.unique(self.prices) if self.prices.size else np.array([])
        return [(float(p), self.quantity(float(p))) for p in corners]


def aggregate_demand(bids, inflexible: float) -> DemandCurve:
    if len(bids):
        P, Q = bids_to_arrays(bids)
    else:
        P = Q = np.empty((0, 4))
    return DemandCurve(P, Q, float(inflexible))


@dataclass
class ClearedResult:
    interval: int
    cleared_price: float
    total_quantity: float
    per_agent_q: dict
    congested: bool
    inflexible_q: float = 0.0
    kind: str = "DA"
    lead_time: int = 0
    imbalance: float = 0.0


def price_bounds(supply: SupplyCurve, demand: DemandCurve, hour: int | None = None):
    a = supply.intercept(hour)
    q_hi = demand.inflexible_load + float(np.sum(np.maximum(demand.quantities[:, 3], 0.0))) \
        if demand.quantities.size else demand.inflexible_load
    return 0.0, 10.0 * a + supply.slope * q_hi


def clear(demand: DemandCurve, supply: SupplyCurve, hour: int | None = None,
          tol: float = PRICE_TOL) -> tuple[float, float, bool]:
    """Intersect demand with supply; returns ``(price, total_quantity, congested)``.

    When the intersection sits on the flat part of a bid (P3 == P4), the price
    snaps to that corner, where the bid holds its planned quantity; the
    remaining gap to the supply curve is left unserved. Congestion adds the
    one-shot surcharge and re-evaluates demand at the raised price.
    """
    price = clearing_price(demand, supply, hour, tol)
    total = demand.quantity(price)
    if total > supply.feeder_limit:
        price += supply.surcharge
        return price, demand.quantity(price), True
    return price, total, False


def clearing_price(demand: DemandCurve, supply: SupplyCurve, hour: int | None = None,
                   tol: float = PRICE_TOL) -> float:
    a, b = supply.intercept(hour), supply.slope
    P, Q, infl = demand.prices, demand.quantities, demand.inflexible_load
    if b == 0.0:
        return a
    lo, hi = price_bounds(supply, demand, hour)
    if demand_at(P, Q, infl, lo) - (lo - a) / b < 0.0 or demand_at(P, Q, infl, hi) - (hi - a) / b > 0.0:
        raise ClearingError(f"no supply/demand intersection in price range [{lo:.4g}, {hi:.4g}]")
    lo, hi = bisect_price(P, Q, infl, a, b, lo, hi, tol)
    # a jump inside the final bracket comes from a flat bid segment
    if P.size:
        flat = np.concatenate([P[:, 2][(P[:, 2] == P[:, 3]) & (Q[:, 3] > Q[:, 2])],
                               P[:, 1][(P[:, 0] == P[:, 1]) & (Q[:, 1] > Q[:, 0])]])
        inside = flat[(flat >= lo) & (flat <= hi)]
        if inside.size:
            return float(inside.max())
    return 0.5 * (lo + hi)


def agent_quantities(P: np.ndarray, Q: np.ndarray, price: float) -> np.ndarray:
    """Each bid's quantity at ``price`` (vectorised quantity_at_price)."""
    return _quantities_np(P, Q, price)


def clear_arrays(P: np.ndarray, Q: np.ndarray, inflexible: float, supply: SupplyCurve,
                 hour: int | None = None) -> tuple[float, np.ndarray, bool, float]:
    """Clear stacked bids; returns ``(price, per-bid quantities, congested, imbalance)``.

    ``imbalance`` is supply at the pre-surcharge price minus served demand.
    """
    demand = DemandCurve(P, Q, float(inflexible))
    price = clearing_price(demand, supply, hour)
    q = agent_quantities(P, Q, price)
    total = float(inflexible) + float(q.sum())
    supplied = (price - supply.intercept(hour)) / supply.slope if supply.slope > 0 else total
    imbalance = supplied - total
    congested = demand.quantity(price) > supply.feeder_limit
    if congested:
        price += supply.surcharge
        q = agent_quantities(P, Q, price)
    return price, q, congested, imbalance


def clear_interval(bids: dict, inflexible: float, supply: SupplyCurve, interval: int,
                   hour: int | None = None, kind: str = "DA", lead_time: int = 0) -> ClearedResult:
    """Clear one interval for ``bids`` keyed by agent id."""
    ids = list(bids)
    if ids:
        P, Q = bids_to_arrays([bids[i] for i in ids])
    else:
        P = Q = np.empty((0, 4))
    price, q, congested, imbalance = clear_arrays(P, Q, inflexible, supply, hour)
    per_agent = {i: float(v) for i, v in zip(ids, q)}
    total = float(inflexible) + float(sum(per_agent.values()))
    return ClearedResult(interval=interval, cleared_price=price, total_quantity=total,
                         per_agent_q=per_agent, congested=congested, inflexible_q=float(inflexible),
                         kind=kind, lead_time=lead_time, imbalance=imbalance)


# ---------------------------------------------------------------------------
# forecasting and convergence tracking

@dataclass
class PriceHistory:
    """Exponential moving average of final cleared prices per hour of day."""
    decay: float = EMA_DECAY
    ema: dict = field(default_factory=dict)

    def update(self, hour: int, price: float) -> None:
        hod = hour % 24
        old = self.ema.get(hod)
        self.ema[hod] = price if old is None else self.decay * old + (1.0 - self.decay) * price


def forecast_prices(history: PriceHistory, inflexible_forecast: np.ndarray, supply: SupplyCurve,
                    horizon: int, start_hour: int = 0) -> np.ndarray:
    """Per-hour forecast from the same-hour EMA, falling back to the supply
    price of the forecast inflexible load."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    out = np.empty(horizon)
    for k in range(horizon):
        h = start_hour + k
        ema = history.ema.get(h % 24)
        out[k] = ema if ema is not None else supply.price_at(float(inflexible_forecast[k]), h)
    return out


@dataclass
class PriceEvolution:
    """Cleared prices per target hour in the order they were obtained."""
    horizon: int = DA_HORIZON
    sequences: dict = field(default_factory=dict)

    def record(self, target_hour: int, price: float) -> None:
        seq = self.sequences.setdefault(target_hour, [])
        if len(seq) >= self.horizon:
            raise ValueError(f"more than {self.horizon} prices for hour {target_hour}")
        seq.append(price)


def check_convergence(sequence, epsilon: float, k: int) -> bool:
    """True when the last ``k`` prices span less than ``epsilon``."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(sequence) < k:
        return False
    tail = np.asarray(sequence[-k:], dtype=float)
    return bool(tail.max() - tail.min() < epsilon)
