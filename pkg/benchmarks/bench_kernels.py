"""Time the numba kernels against the numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``TEVSIM_DISABLE_NUMBA``. Numba compile time is excluded by a
warm-up pass (and cached on disk after the first run).

    python benchmarks/bench_kernels.py [--solves 200] [--clearings 5000] [--scenario]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def workload(solves: int, clearings: int, scenario: bool) -> dict:
    from tevsim import _accel
    from tevsim.bidding import four_point_arrays
    from tevsim.ev_model import AgentConfig, DrivingSchedule, default_catalog, horizon_sets
    from tevsim.market import SupplyCurve, clear_arrays
    from tevsim.scheduler import InfeasibleHorizon, PriceForecast, optimal_schedule

    rng = np.random.default_rng(0)
    specs = default_catalog(v2g=True)
    hours = np.arange(48)
    base = 0.05 + 0.04 * np.exp(-0.5 * ((hours % 24 - 19) / 2.5) ** 2)

    def qp_batch(k):
        done = 0
        while done < k:
            spec = specs[int(rng.integers(len(specs)))]
            agent = AgentConfig(spec, DrivingSchedule(int(rng.integers(16, 21)), int(rng.integers(6, 9)), 25.0),
                                float(rng.uniform(0.1, 0.9)), 0.03, 0.001, 0.005)
            start = int(rng.integers(24))
            sets = horizon_sets(agent.schedule, start, 48)
            prices = np.roll(base, -start) * rng.uniform(0.95, 1.05, 48)
            try:
                optimal_schedule(agent, sets, PriceForecast(start, prices), spec.c_max - rng.uniform(0, 10))
            except InfeasibleHorizon:
                continue
            done += 1

    supply = SupplyCurve(0.03, 0.07 / 66, 5.0 * 66)

    def clear_batch(k):
        for _ in range(k):
            q = rng.uniform(-7, 11.5, 20)
            P, Q = four_point_arrays(q, rng.uniform(0.04, 0.12, 20), -0.004, 0.002, specs[0], 0.6,
                                     np.ones(20, dtype=bool))
            clear_arrays(P, Q, float(rng.uniform(40, 120)), supply)

    qp_batch(3)
    clear_batch(10)
    out = {"backend": _accel.backend()}
    t = time.perf_counter()
    qp_batch(solves)
    out["qp_ms"] = 1e3 * (time.perf_counter() - t) / solves
    t = time.perf_counter()
    clear_batch(clearings)
    out["clear_us"] = 1e6 * (time.perf_counter() - t) / clearings
    if scenario:
        from tevsim.config import ScenarioConfig
        from tevsim.sim import run_scenario

        t = time.perf_counter()
        run_scenario(ScenarioConfig(days=3, fleet_size=10))
        out["scenario_s"] = time.perf_counter() - t
    return out


def run_backend(disable: bool, args) -> dict:
    env = dict(os.environ)
    env.pop("TEVSIM_DISABLE_NUMBA", None)
    if disable:
        env["TEVSIM_DISABLE_NUMBA"] = "1"
    cmd = [sys.executable, __file__, "--worker", "--solves", str(args.solves),
           "--clearings", str(args.clearings)] + (["--scenario"] if args.scenario else [])
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--solves", type=int, default=200, help="48-hour scheduling QPs per backend")
    parser.add_argument("--clearings", type=int, default=5000, help="20-bid market clearings per backend")
    parser.add_argument("--scenario", action="store_true", help="also time a 10-agent, 3-day run")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.worker:
        print(json.dumps(workload(args.solves, args.clearings, args.scenario)))
        return 0
    rows = [run_backend(False, args), run_backend(True, args)]
    keys = [("qp_ms", "QP solve (ms)"), ("clear_us", "clearing (us)"), ("scenario_s", "scenario (s)")]
    print(f"{'':16}" + "".join(f"{r['backend']:>12}" for r in rows) + f"{'speed-up':>12}")
    for key, label in keys:
        if key not in rows[0]:
            continue
        a, b = rows[0][key], rows[1][key]
        print(f"{label:16}{a:12.3f}{b:12.3f}{b / a:11.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
