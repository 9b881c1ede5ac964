"""Four-point price/quantity bids built around a planned quantity.

A bid carries prices and quantities only; slider, cost coefficients, SOC and
the schedule stay with the agent.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ev_model import EvSpec

log = logging.getLogger(__name__)

DEFAULT_DEADBAND = 0.002
RT_SLOTS = 12


@dataclass(frozen=True)
class BidCurve:
    """Points ``(P1, Q1) .. (P4, Q4)`` with P non-increasing and Q non-decreasing.

    The upper segment P1->P2 is sloped, P2->P3 is the deadband at the planned
    quantity, and P3->P4 is flat (P4 == P3), so below P3 the bid takes Q4.
    An inflexible bid has all four quantities equal.
    """
    prices: tuple
    quantities: tuple
    deadband: float
    slope: float
    intercept: float
    flexible: bool = True

    @property
    def q_plan(self) -> float:
        return self.quantities[1]

    @property
    def center_price(self) -> float:
        return 0.5 * (self.prices[1] + self.prices[2])

    @property
    def q_min(self) -> float:
        return self.quantities[0]

    @property
    def q_max(self) -> float:
        return self.quantities[3]

    def scaled(self, factor: float) -> "BidCurve":
        """Same curve with quantities multiplied by ``factor``."""
        return BidCurve(self.prices, tuple(q * factor for q in self.quantities), self.deadband,
                        self.slope / factor if factor else self.slope, self.intercept, self.flexible)

    def to_record(self, agent_id: str, hour: int) -> dict:
        rec = {"agent_id": agent_id, "hour": hour}
        for i in range(4):
            rec[f"P{i + 1}"] = self.prices[i]
        for i in range(4):
            rec[f"Q{i + 1}"] = self.quantities[i]
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "BidCurve":
        p = tuple(float(rec[f"P{i}"]) for i in range(1, 5))
        q = tuple(float(rec[f"Q{i}"]) for i in range(1, 5))
        db = 0.5 * (p[1] - p[2])
        flexible = not (q[0] == q[1] == q[2] == q[3])
        slope = (p[1] - p[0]) / (q[1] - q[0]) if q[1] != q[0] else 0.0
        intercept = p[1] - db - slope * q[1]
        return cls(p, q, db, slope, intercept, flexible)


def bid_slope(prices: np.ndarray, omega: float, spec: EvSpec) -> float:
    """Price drop per kWh of extra demand: forecast spread over the charger
    range, scaled by ``1/omega``. ``omega == 0`` yields ``inf`` (vertical bid)."""
    span = spec.discharge_rating + spec.charge_rating
    if span <= 0:
        raise ValueError("charger range must be positive")
    if omega <= 0:
        return float("inf")
    spread = float(np.max(prices) - np.min(prices))
    if spread == 0.0:
        log.warning("constant price forecast; bid curve is flat")
    return (spread / (-span)) / omega


def four_point_bid(q_plan_t: float, p_f_t: float, slope: float, db: float, spec: EvSpec,
                   omega: float) -> BidCurve:
    if db < 0:
        raise ValueError("deadband must be non-negative")
    q_lo, q_hi = -spec.discharge_rating, spec.charge_rating
    if not q_lo - 1e-9 <= q_plan_t <= q_hi + 1e-9:
        raise ValueError(f"planned quantity {q_plan_t} outside charger range [{q_lo}, {q_hi}]")
    q_plan_t = min(max(q_plan_t, q_lo), q_hi)
    if omega <= 0 or not np.isfinite(slope):
        p = (p_f_t + db, p_f_t + db, p_f_t - db, p_f_t - db)
        return BidCurve(p, (q_plan_t,) * 4, db, 0.0, p_f_t, flexible=False)
    intercept = p_f_t - slope * q_plan_t
    p1 = q_lo * slope + intercept + db
    p2 = q_plan_t * slope + intercept + db
    p3 = q_plan_t * slope + intercept - db
    return BidCurve((p1, p2, p3, p3), (q_lo, q_plan_t, q_plan_t, q_hi), db, slope, intercept, True)


def inflexible_bid(q: float, price: float, db: float = 0.0) -> BidCurve:
    """Vertical bid at ``q`` (used for hours the vehicle is not plugged in)."""
    p = (price + db, price + db, price - db, price - db)
    return BidCurve(p, (q,) * 4, db, 0.0, price, flexible=False)


def quantity_at_price(bid: BidCurve, price: float) -> float:
    """Quantity the bid takes at ``price``; at P3 the deadband value is used."""
    p1, p2, p3, p4 = bid.prices
    q1, q2, q3, q4 = bid.quantities
    if not bid.flexible:
        return q2
    if p3 <= price <= p2:
        return q2
    if price >= p1:
        return q1
    if price > p2:
        return q1 + (price - p1) * (q2 - q1) / (p2 - p1)
    if price <= p4:
        return q4
    return q3 + (price - p3) * (q4 - q3) / (p4 - p3)


def quantity_limits_at_price(bid: BidCurve, price: float) -> tuple[float, float]:
    """Quantities just above and just below ``price`` (they differ only on the
    flat segments of the curve)."""
    p1, p2, p3, p4 = bid.prices
    q = quantity_at_price(bid, price)
    if not bid.flexible:
        return q, q
    hi = lo = q
    if price == p1 and p1 == p2:
        hi, lo = bid.quantities[0], bid.quantities[1]
    if price == p3 and p3 == p4:
        lo = bid.quantities[3]
    return hi, lo


def rt_bid(da_cleared_q: float, q_plan_next: float, minute_slot: int, hour_bid: BidCurve,
           spec: EvSpec, anchor_price: float | None = None) -> BidCurve:
    """Five-minute bid: the hour bid re-anchored at the interpolated quantity,
    with quantities per slot (hourly values / 12).

    The anchor quantity sits at ``anchor_price`` (the hour's cleared DA price
    when given, else the centre of the hour bid's deadband).
    """
    if not 0 <= minute_slot < RT_SLOTS:
        raise ValueError("minute_slot must be in 0..11")
    anchor = da_cleared_q + (minute_slot / RT_SLOTS) * (q_plan_next - da_cleared_q)
    center = hour_bid.center_price if anchor_price is None else anchor_price
    if not hour_bid.flexible:
        curve = inflexible_bid(anchor, center, hour_bid.deadband)
    else:
        anchor = min(max(anchor, hour_bid.q_min), hour_bid.q_max)
        curve = four_point_bid(anchor, center, hour_bid.slope, hour_bid.deadband, spec, 1.0)
    return curve.scaled(1.0 / RT_SLOTS)


def bids_to_arrays(bids) -> tuple[np.ndarray, np.ndarray]:
    """Stack bids into ``(n, 4)`` price and quantity arrays for clearing kernels."""
    n = len(bids)
    P = np.empty((n, 4))
    Q = np.empty((n, 4))
    for i, b in enumerate(bids):
        P[i] = b.prices
        Q[i] = b.quantities
    return P, Q


def four_point_arrays(q_plan: np.ndarray, p_f: np.ndarray, slope: float, db: float, spec: EvSpec,
                      omega: float, plugged: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``four_point_bid`` over a horizon, as ``(N, 4)`` price and
    quantity arrays. Hours with ``plugged == False`` get a vertical bid at 0."""
    q_lo, q_hi = -spec.discharge_rating, spec.charge_rating
    q_plan = np.clip(np.asarray(q_plan, dtype=float), q_lo, q_hi)
    p_f = np.asarray(p_f, dtype=float)
    N = q_plan.shape[0]
    P = np.empty((N, 4))
    Q = np.empty((N, 4))
    if omega <= 0 or not np.isfinite(slope):
        P[:, 0] = P[:, 1] = p_f + db
        P[:, 2] = P[:, 3] = p_f - db
        Q[:] = q_plan[:, None]
    else:
        intercept = p_f - slope * q_plan
        P[:, 0] = q_lo * slope + intercept + db
        P[:, 1] = q_plan * slope + intercept + db
        P[:, 2] = P[:, 3] = q_plan * slope + intercept - db
        Q[:, 0] = q_lo
        Q[:, 1] = Q[:, 2] = q_plan
        Q[:, 3] = q_hi
    if plugged is not None:
        off = ~np.asarray(plugged, dtype=bool)
        P[off, 0] = P[off, 1] = p_f[off]
        P[off, 2] = P[off, 3] = p_f[off]
        Q[off] = 0.0
    return P, Q


def curve_from_arrays(p_row: np.ndarray, q_row: np.ndarray, db: float, slope: float) -> BidCurve:
    flexible = not np.all(q_row == q_row[0])
    intercept = 0.5 * (p_row[1] + p_row[2]) - (slope if flexible else 0.0) * q_row[1]
    return BidCurve(tuple(float(v) for v in p_row), tuple(float(v) for v in q_row), db,
                    slope if flexible else 0.0, float(intercept), flexible)
