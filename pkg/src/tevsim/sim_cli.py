"""Command line entry point: ``tevsim run|compare-modes|validate-config|plot``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, dump_config, load_config
from .sim import SimulationError, compare_modes, run_scenario


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML scenario file (defaults apply to missing keys)")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["V1G", "V2G"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--days", type=int)
    p.add_argument("--fleet-size", type=int, dest="fleet_size")


def _resolve(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    overrides = {k: getattr(args, k) for k in ("seed", "mode", "days", "fleet_size")
                 if getattr(args, k, None) is not None}
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return cfg.replace(**overrides).validate()


def cmd_run(args) -> int:
    cfg = _resolve(args)
    outcome = run_scenario(cfg, cfg.output_dir)
    s = outcome.summary()
    print(f"fleet savings {s['fleet_savings_pct']:.2f}%  "
          f"peak load {outcome.system.peak_load_base:.1f} -> {outcome.system.peak_load_transactive:.1f} kW  "
          f"converged {outcome.transactive.convergence['fraction_converged']:.3f}")
    for name, rep in outcome.audits.items():
        print(f"audit {name}: {'ok' if rep.ok else 'FAILED'}"
              + ("" if rep.ok else "; " + "; ".join(rep.messages)))
    print(f"outputs written to {cfg.output_dir}")
    return 0 if outcome.ok else 1


def cmd_compare(args) -> int:
    cfg = _resolve(args)
    rows = compare_modes(cfg, cfg.output_dir)
    print(f"{'phi':>7} {'V1G %':>8} {'V2G %':>8} {'delta %':>8} {'dpeak kW':>9}")
    for r in rows:
        print(f"{r['phi']:7.4f} {r['savings_v1g']:8.2f} {r['savings_v2g']:8.2f} "
              f"{r['delta_savings']:8.2f} {r['delta_peak_reduction']:9.2f}")
    return 0 if all(r["audit_ok"] for r in rows) else 1


def cmd_validate(args) -> int:
    cfg = _resolve(args)
    sys.stdout.write(dump_config(cfg))
    return 0


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    run_dir = Path(args.run_dir)
    with open(run_dir / "agents.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("no agents to plot", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    w = [float(r["slider"]) for r in rows]
    for col, label, name in (("savings_pct", "Savings (%)", "savings_vs_slider.svg"),
                             ("amenity_pct", "Amenity (%)", "amenity_vs_slider.svg")):
        vals = [float(r[col]) if r[col] not in ("", "nan") else float("nan") for r in rows]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.scatter(w, vals, s=18)
        ax.set_xlabel("Slider setting")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(out / name, metadata={"Date": None})
        plt.close(fig)
        print(out / name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tevsim", description="Transactive EV market simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="base and transactive runs for one scenario")
    _add_common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare-modes", help="paired V1G/V2G runs over the degradation sweep")
    _add_common(p)
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("validate-config", help="check a config and print it with defaults filled in")
    _add_common(p)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("plot", help="SVG scatter plots of savings and amenity against the slider")
    p.add_argument("run_dir", help="directory written by 'run'")
    p.add_argument("--out", help="directory for the SVG files (default: run_dir)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
