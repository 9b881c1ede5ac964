"""Scenario orchestration: fleet synthesis, the hourly DA / five-minute RT loop,
the charge-on-arrival base case, the post-run audit, and log writers."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bidding import (RT_SLOTS, bid_slope, bids_to_arrays, curve_from_arrays, four_point_arrays,
                      inflexible_bid, rt_bid)
from .config import ScenarioConfig
from .control import DEVIATION_TOL, DeviationLog, apply_control, departure_floor
from .ev_model import (AgentConfig, EvState, HourKind, default_catalog, horizon_sets, hour_kind,
                       load_ev_catalog, load_schedules, synthesize_fleet, synthetic_schedules)
from .market import (InflexibleProfile, PriceEvolution, PriceHistory, SupplyCurve,
                     check_convergence, clear_arrays, forecast_prices)
from .metrics import (AgentReport, SystemReport, agent_reports, greedy_charging, savings,
                      spearman, system_report)
from .scheduler import PriceForecast, Schedule, optimal_schedule, warm_start_vector

log = logging.getLogger(__name__)

SOC_TOL = 1e-9
CONSERVATION_TOL = 1e-9


class SimulationError(RuntimeError):
    """A module failed; the message names the interval and agent."""


@dataclass
class Scenario:
    config: ScenarioConfig
    agents: list
    houses: int
    supply: SupplyCurve
    profile: InflexibleProfile
    infl_forecast: np.ndarray   # hourly, covers days*24 + horizon
    infl_actual: np.ndarray     # (hours, 12) per-slot actuals

    @property
    def hours(self) -> int:
        return self.config.days * 24

    @property
    def measured(self) -> np.ndarray:
        return np.arange(self.hours) >= self.config.metrics.warmup_days * 24


def build_scenario(config: ScenarioConfig, agents: list | None = None) -> Scenario:
    """Fleet, supply curve and inflexible load for ``config``.

    The fleet is drawn from the V2G catalog and trimmed to V1G afterwards, so
    both modes get identical vehicles and schedules for a given seed.
    """
    config.validate()
    a = config.agents
    if agents is None:
        if config.catalog:
            catalog = load_ev_catalog(config.catalog, v2g=True)
        else:
            catalog = [_with_eta(s, a.eta_in, a.eta_out) for s in default_catalog(v2g=True)]
        if config.schedules:
            pool = load_schedules(config.schedules)
        else:
            pool = synthetic_schedules(config.schedule_pool, rng_seed=config.seed * 7919 + 1)
        agents = synthesize_fleet(catalog, pool, config.fleet_size, config.seed, a.slider_dist,
                                  inconvenience_rate=a.alpha, smoothing_coeff=a.beta,
                                  degradation_rate=a.phi)
    if config.mode == "V1G":
        agents = [_replace_spec(ag, ag.spec.as_v1g()) for ag in agents]
    houses = max(1, int(round(len(agents) * config.inflexible.houses_per_ev)))
    s = config.supply
    supply = SupplyCurve(s.base_price, s.slope_per_house / houses, s.feeder_limit_per_house * houses,
                         s.surcharge, s.evening_bump)
    inf = config.inflexible
    profile = InflexibleProfile(houses, inf.base_kwh, inf.morning_kwh, inf.evening_kwh, inf.rt_noise)
    hours = config.days * 24
    forecast = profile.hourly(np.arange(hours + config.horizon))
    rng = np.random.default_rng([config.seed, 2])
    noise = rng.uniform(-1.0, 1.0, size=(hours, RT_SLOTS)) * inf.rt_noise
    actual = forecast[:hours, None] / RT_SLOTS * (1.0 + noise)
    return Scenario(config, agents, houses, supply, profile, forecast, actual)


def _with_eta(spec, eta_in, eta_out):
    from dataclasses import replace
    return replace(spec, eta_in=eta_in, eta_out=eta_out)


def _replace_spec(agent: AgentConfig, spec) -> AgentConfig:
    from dataclasses import replace
    return replace(agent, spec=spec)


# ---------------------------------------------------------------------------
# run containers

@dataclass
class RunResult:
    label: str
    agents: list
    measured: np.ndarray
    ev_hourly: np.ndarray        # (n, H) delivered metered kWh
    soc: np.ndarray              # (n, H) SOC at the end of each hour
    rt_price: np.ndarray         # (H, 12)
    rt_total: np.ndarray         # (H, 12) cleared total incl. inflexible
    rt_inflexible: np.ndarray    # (H, 12)
    rt_congested: np.ndarray     # (H, 12) bool
    rt_committed: np.ndarray     # (n, H, 12) metered kWh per slot
    rt_delivered: np.ndarray     # (n, H, 12)
    slot_soc: np.ndarray         # (n, H, 12) SOC after each slot
    da_price: np.ndarray         # (H,) final (lead 0) DA price
    da_total: np.ndarray         # (H,)
    da_inflexible: np.ndarray    # (H,)
    da_committed: np.ndarray     # (n, H)
    load_kw: np.ndarray          # (H, 12) substation load in kW
    bills: np.ndarray            # (n,) over the measured window
    da_log: list = field(default_factory=list)   # every DA clearing, all lead times
    bid_wire: list = field(default_factory=list)  # lead-0 DA bids as wire records
    deviations: DeviationLog = field(default_factory=DeviationLog)
    evolution: PriceEvolution = field(default_factory=PriceEvolution)
    convergence: dict = field(default_factory=dict)

    @property
    def hours(self) -> int:
        return self.da_price.shape[0]


def _empty_run(label: str, sc: Scenario) -> RunResult:
    n, H = len(sc.agents), sc.hours
    return RunResult(
        label=label, agents=sc.agents, measured=sc.measured,
        ev_hourly=np.zeros((n, H)), soc=np.zeros((n, H)),
        rt_price=np.zeros((H, RT_SLOTS)), rt_total=np.zeros((H, RT_SLOTS)),
        rt_inflexible=sc.infl_actual.copy(), rt_congested=np.zeros((H, RT_SLOTS), dtype=bool),
        rt_committed=np.zeros((n, H, RT_SLOTS)), rt_delivered=np.zeros((n, H, RT_SLOTS)),
        slot_soc=np.zeros((n, H, RT_SLOTS)),
        da_price=np.zeros(H), da_total=np.zeros(H), da_inflexible=sc.infl_forecast[:H].copy(),
        da_committed=np.zeros((n, H)), load_kw=np.zeros((H, RT_SLOTS)), bills=np.zeros(n),
        evolution=PriceEvolution(sc.config.horizon),
    )


# ---------------------------------------------------------------------------
# base case: charge at full rating on arrival, vertical bids in its own market

def run_base(sc: Scenario) -> RunResult:
    run = _empty_run("base", sc)
    H = sc.hours
    slot_supply = sc.supply.per_slot(RT_SLOTS)
    for i, ag in enumerate(sc.agents):
        e_in, soc = greedy_charging(ag, H)
        run.ev_hourly[i] = e_in / ag.spec.eta_in
        run.soc[i] = soc
    Pv = np.zeros((len(sc.agents), 4))
    for h in range(H):
        q = run.ev_hourly[:, h]
        Pv[:] = 0.0
        Q = np.repeat(q[:, None], 4, axis=1)
        price, qa, cong, _ = clear_arrays(Pv, Q, sc.infl_forecast[h], sc.supply, hour=h)
        run.da_price[h] = price
        run.da_committed[:, h] = qa
        run.da_total[h] = sc.infl_forecast[h] + qa.sum()
        run.da_log.append((h, 0, price, run.da_total[h], sc.infl_forecast[h], cong))
        run.evolution.record(h, price)
        Qs = Q / RT_SLOTS
        for s in range(RT_SLOTS):
            infl = sc.infl_actual[h, s]
            p, qs, c, _ = clear_arrays(Pv, Qs, infl, slot_supply, hour=h)
            run.rt_price[h, s] = p
            run.rt_congested[h, s] = c
            run.rt_committed[:, h, s] = qs
            run.rt_delivered[:, h, s] = qs
            run.rt_total[h, s] = infl + qs.sum()
        prev = run.soc[:, h - 1] if h else np.array([a.spec.c_max for a in sc.agents])
        for s in range(RT_SLOTS):
            run.slot_soc[:, h, s] = prev + (run.soc[:, h] - prev) * (s + 1) / RT_SLOTS
    _finish(run, sc)
    return run


# ---------------------------------------------------------------------------
# transactive run

def run_transactive(sc: Scenario, label: str = "transactive") -> RunResult:
    cfg = sc.config
    N, H, db = cfg.horizon, sc.hours, cfg.agents.deadband
    lam = cfg.forecast_relaxation
    agents = sc.agents
    n = len(agents)
    run = _empty_run(label, sc)
    slot_supply = sc.supply.per_slot(RT_SLOTS)
    states = [EvState.full(ag.spec) for ag in agents]
    plans: list[Schedule | None] = [None] * n
    plan_age = [0] * n
    slopes = np.zeros(n)
    known: dict[int, float] = {}
    history = PriceHistory()
    P = np.zeros((N, n, 4))
    Q = np.zeros((N, n, 4))

    for h in range(H):
        fc = forecast_prices(history, sc.infl_forecast[h:h + N], sc.supply, N, h)
        for k in range(N):
            if h + k in known:
                fc[k] = known[h + k]
        for i, ag in enumerate(agents):
            sets = horizon_sets(ag.schedule, h, N)
            if plans[i] is None or plan_age[i] + 1 >= cfg.resolve_every:
                try:
                    plans[i] = optimal_schedule(ag, sets, PriceForecast(h, fc), states[i].soc,
                                                warm_start=warm_start_vector(plans[i], 1))
                except Exception as exc:
                    raise SimulationError(f"hour {h}, agent {ag.agent_id}: {exc}") from exc
                plan_age[i] = 0
            else:
                plans[i] = _shift_plan(plans[i], 1)
                plan_age[i] += 1
            slopes[i] = bid_slope(fc, ag.slider, ag.spec)
            P[:, i], Q[:, i] = four_point_arrays(plans[i].q_plan, fc, slopes[i], db, ag.spec,
                                                 ag.slider, plugged=sets.trans_mask)
        for k in range(N):
            t = h + k
            try:
                price, q, cong, _ = clear_arrays(P[k], Q[k], sc.infl_forecast[t], sc.supply, hour=t)
            except Exception as exc:
                raise SimulationError(f"DA interval {t} (round {h}): {exc}") from exc
            # the agent-facing forecast moves part of the way to the new price
            known[t] = lam * price + (1.0 - lam) * fc[k]
            run.evolution.record(t, price)
            total = sc.infl_forecast[t] + float(q.sum())
            run.da_log.append((t, k, price, total, sc.infl_forecast[t], cong))
            if k == 0:
                run.da_price[h] = price
                run.da_committed[:, h] = q
                run.da_total[h] = total
        known.pop(h, None)
        history.update(h, run.da_price[h])
        hour_bids = [curve_from_arrays(P[0, i], Q[0, i], db, slopes[i]) for i in range(n)]
        for i, ag in enumerate(agents):
            run.bid_wire.append(hour_bids[i].to_record(ag.agent_id, h))
        _rt_hour(run, sc, slot_supply, states, plans, hour_bids, h)

    _finish(run, sc)
    return run


def _rt_hour(run: RunResult, sc: Scenario, slot_supply: SupplyCurve, states: list,
             plans: list, hour_bids: list, h: int) -> None:
    agents = sc.agents
    kinds = [hour_kind(ag.schedule, h) for ag in agents]
    plugged = [k in (HourKind.ARRIVAL, HourKind.PARKED) for k in kinds]
    p_da = run.da_price[h]
    for s in range(RT_SLOTS):
        bids = []
        for i, ag in enumerate(agents):
            if plugged[i]:
                bids.append(rt_bid(run.da_committed[i, h], plans[i].q_plan[0], s, hour_bids[i],
                                   ag.spec, anchor_price=p_da))
            else:
                bids.append(inflexible_bid(0.0, p_da))
        Pr, Qr = bids_to_arrays(bids)
        infl = sc.infl_actual[h, s]
        try:
            price, q, cong, _ = clear_arrays(Pr, Qr, infl, slot_supply, hour=h)
        except Exception as exc:
            raise SimulationError(f"RT interval {h}:{s}: {exc}") from exc
        run.rt_price[h, s] = price
        run.rt_congested[h, s] = cong
        run.rt_total[h, s] = infl + float(q.sum())
        for i, ag in enumerate(agents):
            sched = ag.schedule
            floor = None
            if plugged[i]:
                floor = departure_floor(states[i].soc, ag.spec, sched.t_in, sched.t_out,
                                        sched.daily_miles, h, s)
            try:
                action, states[i] = apply_control(
                    states[i], bids[i], price, ag.spec, kind=kinds[i], daily_miles=sched.daily_miles,
                    agent_id=ag.agent_id, hour=h, slot=s, floor=floor, log=run.deviations)
            except Exception as exc:
                raise SimulationError(f"RT interval {h}:{s}, agent {ag.agent_id}: {exc}") from exc
            run.rt_committed[i, h, s] = action.committed_kwh
            run.rt_delivered[i, h, s] = action.delivered_kwh
            run.slot_soc[i, h, s] = action.resulting_soc
    run.soc[:, h] = run.slot_soc[:, h, -1]
    run.ev_hourly[:, h] = run.rt_delivered[:, h].sum(axis=1)


def _shift_plan(plan: Schedule, shift: int) -> Schedule:
    pad = np.zeros(shift)
    return Schedule(q_plan=np.concatenate([plan.q_plan[shift:], pad]),
                    e_in=np.concatenate([plan.e_in[shift:], pad]),
                    e_out=np.concatenate([plan.e_out[shift:], pad]),
                    soc_traj=np.concatenate([plan.soc_traj[shift:], np.repeat(plan.soc_traj[-1], shift)]),
                    objective_value=plan.objective_value, start_hour=plan.start_hour + shift)


def _finish(run: RunResult, sc: Scenario) -> None:
    w = sc.measured
    run.load_kw = (run.rt_inflexible + run.rt_delivered.sum(axis=0)) * RT_SLOTS
    run.bills = np.einsum("hs,nhs->n", run.rt_price[w], run.rt_delivered[:, w])
    m = sc.config.metrics
    seqs = run.evolution.sequences
    hours = [t for t in range(run.hours) if w[t] and t in seqs]
    ok = [check_convergence(seqs[t], m.convergence_eps, m.convergence_k) for t in hours]
    settle = {}
    for t in hours:
        settle.setdefault(t % 24, []).append(settle_lead(seqs[t], m.convergence_eps))
    run.convergence = {
        "fraction_converged": float(np.mean(ok)) if ok else float("nan"),
        "hours_checked": len(ok),
        "mean_settle_lead_by_hour": {int(k): float(np.mean(v)) for k, v in sorted(settle.items())},
    }


def settle_lead(sequence, epsilon: float) -> int:
    """Rounds before commitment during which the price stayed within
    ``epsilon`` of its final value (larger means it settled earlier)."""
    seq = np.asarray(sequence, dtype=float)
    off = np.flatnonzero(np.abs(seq - seq[-1]) >= epsilon)
    return int(seq.size - 1 - (off[-1] + 1)) + 1 if off.size else int(seq.size)


# ---------------------------------------------------------------------------
# audit

@dataclass
class AuditReport:
    soc_violations: int
    conservation_violations: int
    unlogged_deviations: int
    logged_deviations: int
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.soc_violations or self.conservation_violations or self.unlogged_deviations)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "soc_violations": self.soc_violations,
                "conservation_violations": self.conservation_violations,
                "unlogged_deviations": self.unlogged_deviations,
                "logged_deviations": self.logged_deviations, "messages": self.messages[:20]}


def audit(run: RunResult) -> AuditReport:
    """Re-check SOC bounds, market conservation and control deviations from the logs."""
    msgs = []
    soc_bad = 0
    for i, ag in enumerate(run.agents):
        lo, hi = ag.spec.c_min - SOC_TOL, ag.spec.c_max + SOC_TOL
        bad = (run.slot_soc[i] < lo) | (run.slot_soc[i] > hi)
        if bad.any():
            soc_bad += int(bad.sum())
            h, s = np.argwhere(bad)[0]
            msgs.append(f"{ag.agent_id}: SOC out of bounds at {h}:{s}")
    rt_gap = np.abs(run.rt_total - run.rt_inflexible - run.rt_committed.sum(axis=0))
    da_gap = np.abs(run.da_total - run.da_inflexible - run.da_committed.sum(axis=0))
    scale = 1.0 + np.maximum(np.abs(run.rt_total), 0)
    cons_bad = int(np.count_nonzero(rt_gap > CONSERVATION_TOL * scale)) + \
        int(np.count_nonzero(da_gap > CONSERVATION_TOL * (1.0 + np.abs(run.da_total))))
    if cons_bad:
        msgs.append(f"{cons_bad} intervals violate conservation")
    logged = {(e["agent_id"], e["hour"], e["slot"]) for e in run.deviations.entries}
    dev = np.abs(run.rt_delivered - run.rt_committed) > DEVIATION_TOL
    unlogged = 0
    for i, h, s in np.argwhere(dev):
        if (run.agents[i].agent_id, int(h), int(s)) not in logged:
            unlogged += 1
    if unlogged:
        msgs.append(f"{unlogged} control deviations missing from the log")
    return AuditReport(soc_bad, cons_bad, unlogged, len(run.deviations), msgs)


# ---------------------------------------------------------------------------
# scenario level

@dataclass
class ScenarioOutcome:
    config: ScenarioConfig
    base: RunResult
    transactive: RunResult
    system: SystemReport
    agents: list
    audits: dict

    @property
    def ok(self) -> bool:
        return all(a.ok for a in self.audits.values())

    def fleet_savings(self) -> float:
        return savings(float(self.transactive.bills.sum()), float(self.base.bills.sum()))

    def summary(self) -> dict:
        rep: list[AgentReport] = self.agents
        sl = [r.slider for r in rep]
        sv = [r.savings_pct for r in rep]
        am = [r.amenity_pct for r in rep]
        finite = [i for i, a in enumerate(am) if np.isfinite(a)]
        corr_s = spearman(sl, sv) if len(set(sl)) > 1 else float("nan")
        corr_a = spearman([sl[i] for i in finite], [am[i] for i in finite]) \
            if len({sl[i] for i in finite}) > 1 else float("nan")
        return {
            "mode": self.config.mode, "days": self.config.days, "fleet_size": len(rep),
            "seed": self.config.seed, "phi": self.config.agents.phi, "beta": self.config.agents.beta,
            "fleet_savings_pct": self.fleet_savings(),
            "spearman_slider_savings": corr_s, "spearman_slider_amenity": corr_a,
            "system": self.system.to_dict(),
            "audit": {k: v.to_dict() for k, v in self.audits.items()},
        }


def run_scenario(config: ScenarioConfig, out_dir: str | Path | None = None,
                 base: RunResult | None = None, agents: list | None = None) -> ScenarioOutcome:
    """Base and transactive runs for one configuration, plus reports and audit.

    ``base`` may be passed in to reuse a base run computed for the same fleet.
    """
    sc = build_scenario(config, agents)
    if base is None:
        base = run_base(sc)
    trans = run_transactive(sc)
    outcome = ScenarioOutcome(
        config=config, base=base, transactive=trans, system=system_report(base, trans),
        agents=agent_reports(base, trans, config.metrics.eps_full_fraction),
        audits={"base": audit(base), "transactive": audit(trans)},
    )
    if out_dir is not None:
        write_outputs(outcome, Path(out_dir))
    return outcome


def compare_modes(config: ScenarioConfig, out_dir: str | Path | None = None) -> list[dict]:
    """Paired V1G/V2G runs with a shared fleet for every degradation rate in
    ``config.phi_sweep``; one row per rate."""
    rows = []
    base = None
    for phi in config.phi_sweep:
        pair = {}
        for mode in ("V1G", "V2G"):
            cfg = config.replace(mode=mode, **{"agents.phi": float(phi)})
            sub = None if out_dir is None else Path(out_dir) / f"{mode.lower()}_phi{phi:g}"
            pair[mode] = run_scenario(cfg, sub, base=base)
            base = pair[mode].base
        v1, v2 = pair["V1G"], pair["V2G"]
        rows.append({
            "phi": float(phi),
            "savings_v1g": v1.fleet_savings(), "savings_v2g": v2.fleet_savings(),
            "delta_savings": v2.fleet_savings() - v1.fleet_savings(),
            "peak_reduction_v1g": v1.system.peak_load_reduction,
            "peak_reduction_v2g": v2.system.peak_load_reduction,
            "delta_peak_reduction": v2.system.peak_load_reduction - v1.system.peak_load_reduction,
            "discharged_kwh_v2g": float(-np.minimum(v2.transactive.rt_delivered, 0).sum()),
            "audit_ok": v1.ok and v2.ok,
        })
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _write_csv(Path(out_dir) / "compare_modes.csv", list(rows[0]), [list(r.values()) for r in rows])
        (Path(out_dir) / "compare_modes.json").write_text(json.dumps(rows, indent=2) + "\n")
    return rows


# ---------------------------------------------------------------------------
# writers

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_bids(records: list, path: Path) -> None:
    """Bid wire file: CSV or JSON by suffix."""
    cols = ["agent_id", "hour", "P1", "P2", "P3", "P4", "Q1", "Q2", "Q3", "Q4"]
    if path.suffix == ".json":
        path.write_text(json.dumps([{c: r[c] for c in cols} for r in records], indent=1) + "\n")
    else:
        _write_csv(path, cols, ([r[c] for c in cols] for r in records))


def read_bids(path: Path) -> list[dict]:
    if Path(path).suffix == ".json":
        return json.loads(Path(path).read_text())
    with open(path, newline="") as fh:
        return [{k: (v if k == "agent_id" else (int(v) if k == "hour" else float(v)))
                 for k, v in row.items()} for row in csv.DictReader(fh)]


def write_run(run: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    H = run.hours
    rows = [(t, "DA", k, p, tot, infl, c) for (t, k, p, tot, infl, c) in run.da_log]
    for h in range(H):
        for s in range(RT_SLOTS):
            rows.append((h * RT_SLOTS + s, "RT", 0, run.rt_price[h, s], run.rt_total[h, s],
                         run.rt_inflexible[h, s], bool(run.rt_congested[h, s])))
    _write_csv(out / "market_log.csv",
               ["interval", "kind", "lead_time", "cleared_price", "total_q", "inflexible_q", "congested"],
               rows)
    ids = [a.agent_id for a in run.agents]
    _write_csv(out / "commitments_da.csv", ["interval", "agent_id", "q_committed"],
               ((h, ids[i], run.da_committed[i, h]) for h in range(H) for i in range(len(ids))))
    _write_csv(out / "commitments_rt.csv", ["interval", "agent_id", "q_committed"],
               ((h * RT_SLOTS + s, ids[i], run.rt_committed[i, h, s])
                for h in range(H) for s in range(RT_SLOTS) for i in range(len(ids))))
    _write_csv(out / "control_trace.csv",
               ["hour", "slot", "agent_id", "committed_kwh", "delivered_kwh", "soc"],
               ((h, s, ids[i], run.rt_committed[i, h, s], run.rt_delivered[i, h, s], run.slot_soc[i, h, s])
                for h in range(H) for s in range(RT_SLOTS) for i in range(len(ids))))
    _write_csv(out / "deviations.csv",
               ["hour", "slot", "agent_id", "committed_kwh", "delivered_kwh", "reason"],
               ((e["hour"], e["slot"], e["agent_id"], e["committed_kwh"], e["delivered_kwh"], e["reason"])
                for e in run.deviations.entries))
    if run.bid_wire:
        write_bids(run.bid_wire, out / "bids.csv")


def write_outputs(outcome: ScenarioOutcome, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_run(outcome.base, out / "base")
    write_run(outcome.transactive, out / "transactive")
    rep = outcome.agents
    cols = ["agent_id", "savings_pct", "amenity_pct", "slider", "arrival_hour", "charger_kw",
            "daily_miles", "total_bill_transactive", "total_bill_base"]
    _write_csv(out / "agents.csv", cols, ([getattr(r, c) for c in cols] for r in rep))
    (out / "summary.json").write_text(json.dumps(_jsonable(outcome.summary()), indent=2) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
