#!/usr/bin/env python3
"""Reproduce the directional trend experiments on synthetic traffic.

Sweeps the task arrival probability and the CPU low bound on the default
9-edge scenario, compares the game policy against the baselines, and prints
the aggregate tables (also written as CSVs under --out).
"""

import argparse
import sys
from pathlib import Path

from vecsim.cli import run_sweep, write_sweep_csv
from vecsim.config import ScenarioConfig


def mean_over_seeds(rows, value, policy, field="asr"):
    vals = [getattr(m, field) for _, v, p, _, m in rows if v == value and p == policy]
    return sum(vals) / len(vals)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", default="1,2,3,4,5")
    parser.add_argument("--vehicles", type=int, default=60)
    parser.add_argument("--horizon", type=int, default=120)
    parser.add_argument("--out", default="out/trends")
    args = parser.parse_args()

    seeds = [int(s) for s in args.seeds.split(",")]
    cfg = ScenarioConfig(horizon_slots=args.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    tau_values = [0.3, 0.5, 0.7]
    cpu_values = [1e9, 3e9, 5e9]
    policies = ["game", "orl", "orm", "random"]

    print(f"sweeping arrival probability {tau_values} x {policies} x {len(seeds)} seeds ...")
    tau_rows = run_sweep(cfg, "arrival_prob", tau_values, policies, seeds, vehicles=args.vehicles)
    write_sweep_csv(out / "sweep_arrival_prob.csv", tau_rows)

    print(f"sweeping CPU low bound {cpu_values} x {policies} x {len(seeds)} seeds ...")
    cpu_rows = run_sweep(cfg, "cpu_range", cpu_values, policies, seeds, vehicles=args.vehicles)
    write_sweep_csv(out / "sweep_cpu_range.csv", cpu_rows)

    for label, rows, values in (
        ("arrival probability", tau_rows, tau_values),
        ("cpu low bound (Hz)", cpu_rows, cpu_values),
    ):
        print(f"\nmean service ratio by {label}:")
        print("  value      " + "".join(f"{p:>10}" for p in policies))
        for v in values:
            cells = "".join(f"{mean_over_seeds(rows, v, p):>10.4f}" for p in policies)
            print(f"  {v:<9g}{cells}")
    print(f"\nwrote {out}/sweep_arrival_prob.csv and {out}/sweep_cpu_range.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
