"""Per-agent optimal charge/discharge plan over a rolling horizon.

Decision vector ``x = [e_in(0..N-1), e_out(0..N-1)]`` in battery-side kWh.
The SOC recursion is substituted into the objective and the SOC bounds
become cumulative-sum rows, so the only constraints are boxes and rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ev_model import AgentConfig, HorizonSets
from .qp import QpProblem, QpResult, solve_qp

FEAS_TOL = 1e-9


class InfeasibleHorizon(RuntimeError):
    def __init__(self, message, hour):
        super().__init__(message)
        self.hour = hour


@dataclass(frozen=True)
class PriceForecast:
    start_hour: int
    prices: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.prices)):
            raise ValueError("forecast prices must be finite")

    def __len__(self):
        return len(self.prices)


@dataclass
class Schedule:
    q_plan: np.ndarray
    e_in: np.ndarray
    e_out: np.ndarray
    soc_traj: np.ndarray
    objective_value: float
    start_hour: int = 0
    iterations: int = 0


def drain_profile(agent: AgentConfig, sets: HorizonSets) -> np.ndarray:
    """Cumulative driving energy drawn by the end of each horizon hour."""
    drain = np.zeros(sets.horizon_len)
    half = 0.5 * agent.schedule.drive_energy(agent.spec)
    drain[sets.arrival_hours] += half
    drain[sets.departure_hours] += half
    return np.cumsum(drain)


def check_feasible(agent: AgentConfig, sets: HorizonSets, initial_soc: float) -> None:
    """Charge greedily (the pointwise SOC-maximal trajectory) and report the
    first departure or reserve constraint it cannot meet."""
    spec = agent.spec
    trans = sets.trans_mask
    dep = set(int(t) for t in sets.departure_hours)
    half = 0.5 * agent.schedule.drive_energy(spec)
    arr = set(int(t) for t in sets.arrival_hours)
    soc = initial_soc
    for t in range(sets.horizon_len):
        if t in dep and t >= 1 and soc < spec.c_max - FEAS_TOL:
            raise InfeasibleHorizon(
                f"cannot reach full charge before departure at horizon hour {t} "
                f"(absolute {sets.start_hour + t}); best SOC {soc:.4f} of {spec.c_max:.4f} kWh", t)
        if t in dep or t in arr:
            soc -= half
        if trans[t]:
            soc += max(0.0, min(spec.max_battery_in, spec.c_max - soc))
        if soc < spec.c_min - FEAS_TOL:
            raise InfeasibleHorizon(
                f"SOC reserve breached at horizon hour {t} (absolute {sets.start_hour + t})", t)


def build_qp(agent: AgentConfig, sets: HorizonSets, forecast: PriceForecast,
             initial_soc: float) -> QpProblem:
    """Assemble the weighted cost/amenity/smoothing QP for one agent."""
    N = sets.horizon_len
    if len(forecast) != N:
        raise ValueError(f"forecast length {len(forecast)} != horizon {N}")
    spec = agent.spec
    if not spec.c_min - FEAS_TOL <= initial_soc <= spec.c_max + FEAS_TOL:
        raise ValueError(f"initial SOC {initial_soc} outside battery bounds")
    initial_soc = min(max(initial_soc, spec.c_min), spec.c_max)
    check_feasible(agent, sets, initial_soc)

    w, alpha, beta, phi = (agent.slider, agent.inconvenience_rate,
                           agent.smoothing_coeff, agent.degradation_rate)
    a_in, a_out = 1.0 / spec.eta_in, spec.eta_out
    price = np.asarray(forecast.prices, dtype=float)
    remaining = N - np.arange(N)  # hours whose SOC each energy unit lifts

    q = np.concatenate([
        w * (price + phi) * a_in - (1 - w) * alpha * remaining,
        w * (phi - price) * a_out + (1 - w) * alpha * remaining,
    ])
    P = np.zeros((2 * N, 2 * N))
    idx = np.arange(N)
    P[idx, idx] = 2 * beta * a_in ** 2
    P[idx + N, idx + N] = 2 * beta * a_out ** 2
    P[idx, idx + N] = P[idx + N, idx] = 2 * beta * a_in * a_out

    trans = sets.trans_mask
    lb = np.zeros(2 * N)
    ub = np.concatenate([np.where(trans, spec.max_battery_in, 0.0),
                         np.where(trans, spec.max_battery_out, 0.0)])

    tri = np.tril(np.ones((N, N)))
    A = np.hstack([tri, -tri])
    drain = drain_profile(agent, sets)
    l = spec.c_min - initial_soc + drain
    u = spec.c_max - initial_soc + drain
    labels = [f"soc[{t}]" for t in range(N)]
    for t in sets.departure_hours:
        if t >= 1:
            l[t - 1] = u[t - 1]
            labels[t - 1] = f"full-before-departure[{t}]"

    constant = (1 - w) * alpha * float(np.sum(spec.c_max - initial_soc + drain))
    return QpProblem(P=P, q=q, lb=lb, ub=ub, A=A, l=l, u=u, constant=constant, row_labels=labels)


def schedule_from_solution(agent: AgentConfig, sets: HorizonSets, x: np.ndarray,
                           initial_soc: float, objective: float, iterations: int = 0) -> Schedule:
    N = sets.horizon_len
    spec = agent.spec
    e_in, e_out = x[:N].copy(), x[N:].copy()
    off = ~sets.trans_mask
    e_in[off] = 0.0
    e_out[off] = 0.0
    q_plan = e_in / spec.eta_in - e_out * spec.eta_out
    soc = initial_soc + np.cumsum(e_in - e_out) - drain_profile(agent, sets)
    return Schedule(q_plan=q_plan, e_in=e_in, e_out=e_out, soc_traj=soc,
                    objective_value=objective, start_hour=sets.start_hour, iterations=iterations)


def optimal_schedule(agent: AgentConfig, sets: HorizonSets, forecast: PriceForecast,
                     initial_soc: float, tol: float = 1e-8,
                     warm_start: np.ndarray | None = None) -> Schedule:
    problem = build_qp(agent, sets, forecast, initial_soc)
    res: QpResult = solve_qp(problem, tol=tol, warm_start=warm_start)
    return schedule_from_solution(agent, sets, res.x, min(max(initial_soc, agent.spec.c_min),
                                  agent.spec.c_max), res.objective, res.iterations)


def warm_start_vector(previous: Schedule | None, shift: int) -> np.ndarray | None:
    """Previous plan advanced by ``shift`` hours, padded with zeros."""
    if previous is None:
        return None
    N = len(previous.e_in)
    e_in = np.zeros(N)
    e_out = np.zeros(N)
    if shift < N:
        e_in[:N - shift] = previous.e_in[shift:]
        e_out[:N - shift] = previous.e_out[shift:]
    return np.concatenate([e_in, e_out])
