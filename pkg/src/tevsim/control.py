"""Real-time actuation: RT cleared price -> committed slot energy -> charger setpoint."""
from __future__ import annotations

from dataclasses import dataclass, field

from .bidding import RT_SLOTS, BidCurve, quantity_at_price
from .ev_model import EvSpec, EvState, HourKind, PhysicsViolation, step_soc

DEVIATION_TOL = 1e-9


@dataclass(frozen=True)
class ControlAction:
    agent_id: str
    hour: int
    slot: int
    setpoint_kw: float
    committed_kwh: float
    delivered_kwh: float
    resulting_soc: float
    deviation: str | None = None


@dataclass
class DeviationLog:
    entries: list = field(default_factory=list)

    def add(self, action: ControlAction) -> None:
        self.entries.append({
            "hour": action.hour, "slot": action.slot, "agent_id": action.agent_id,
            "committed_kwh": action.committed_kwh, "delivered_kwh": action.delivered_kwh,
            "reason": action.deviation,
        })

    def __len__(self):
        return len(self.entries)


def departure_floor(soc: float, spec: EvSpec, t_in: int, t_out: int, daily_miles: float,
                    hour: int, slot: int) -> float:
    """Smallest net battery energy this slot that still lets the vehicle reach
    full charge by the start of its next departure hour."""
    hod = hour % 24
    hours_to_departure = (t_out - hod) % 24
    slots_left = RT_SLOTS - 1 - slot
    half_slot_drain = 0.5 * daily_miles / spec.mileage / RT_SLOTS
    drain_now = half_slot_drain if hod == t_in else 0.0
    capacity = (slots_left / RT_SLOTS + hours_to_departure - 1) * spec.max_battery_in
    return spec.c_max - soc + drain_now * (1 + slots_left) - capacity


def apply_control(state: EvState, rt_bid: BidCurve, cleared_price: float, spec: EvSpec, *,
                  kind: HourKind, daily_miles: float, agent_id: str = "", hour: int = 0,
                  slot: int = 0, floor: float | None = None,
                  log: DeviationLog | None = None) -> tuple[ControlAction, EvState]:
    """Deliver the committed slot energy, clipped to what the battery allows.

    ``rt_bid`` quantities are metered kWh per slot. ``floor`` is an optional
    minimum net battery energy (see ``departure_floor``). Any clipping is
    recorded on the action and in ``log``.
    """
    committed = quantity_at_price(rt_bid, cleared_price)
    frac = 1.0 / RT_SLOTS
    reason = None
    if kind in (HourKind.AWAY, HourKind.DEPARTURE):
        net = 0.0
        if abs(committed) > DEVIATION_TOL:
            reason = "unplugged"
    else:
        net = committed * spec.eta_in if committed >= 0 else committed / spec.eta_out
        drain = frac * 0.5 * daily_miles / spec.mileage if kind == HourKind.ARRIVAL else 0.0
        lo = max(-spec.max_battery_out * frac, state.c_min - state.soc + drain)
        hi = min(spec.max_battery_in * frac, state.c_max - state.soc + drain)
        if floor is not None and floor > net + DEVIATION_TOL:
            lo = max(lo, floor)
            reason = "departure-floor"
        if lo > hi + DEVIATION_TOL:
            raise PhysicsViolation(f"{agent_id}: no feasible slot energy at hour {hour} slot {slot}")
        clipped = min(max(net, lo), hi)
        if abs(clipped - net) > DEVIATION_TOL and reason is None:
            reason = "soc-bound" if (clipped == hi and hi < spec.max_battery_in * frac) or \
                (clipped == lo and lo > -spec.max_battery_out * frac) else "rating"
        net = clipped
    e_in, e_out = (net, 0.0) if net >= 0 else (0.0, -net)
    new_state = step_soc(state, e_in, e_out, kind, daily_miles, spec, fraction=frac)
    delivered = e_in / spec.eta_in - e_out * spec.eta_out
    if abs(delivered - committed) <= DEVIATION_TOL:
        reason = None
    action = ControlAction(agent_id, hour, slot, delivered * RT_SLOTS, committed, delivered,
                           new_state.soc, reason)
    if reason is not None and log is not None:
        log.add(action)
    return action, new_state
