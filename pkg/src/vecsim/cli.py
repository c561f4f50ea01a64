"""Operator command line: run episodes, sweep parameters, verify properties,
and serve the environment bridge."""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
from pathlib import Path

from vecsim import bridge as bridge_mod
from vecsim.config import ScenarioConfig, load_config, require_valid
from vecsim.engine import (
    run_episode,
    write_dynamics_csv,
    write_metrics_csv,
)
from vecsim.mobility import load_trace, synth_trace
from vecsim.verify import results_report, run_suite

DEFAULT_VEHICLES = 60

USAGE_EXIT = 2


def _load_scenario(args) -> ScenarioConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ScenarioConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, rng_seed=args.seed)
    return require_valid(cfg)


def _trajectories(cfg: ScenarioConfig, args, seed: int):
    if getattr(args, "trace", None):
        return load_trace(args.trace, cfg)
    return synth_trace(cfg, args.vehicles, seed)


def _threads() -> int:
    raw = os.environ.get("VECSIM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_run(args) -> int:
    cfg = _load_scenario(args)
    seed = args.seed if args.seed is not None else cfg.rng_seed
    traj = _trajectories(cfg, args, seed)
    metrics, outcomes, dynamics = run_episode(
        args.policy, cfg, traj, seed, collect_dynamics=args.policy == "game"
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / f"metrics_{args.policy}_seed{seed}.csv"
    write_metrics_csv(metrics_path, outcomes, metrics, cfg.num_edges)
    if dynamics:
        write_dynamics_csv(out / f"dynamics_{args.policy}_seed{seed}.csv", dynamics)
    print(
        f"policy={args.policy} seed={seed} slots={metrics.slots} "
        f"ASR={metrics.asr:.4f} CR={metrics.cr:.4f} AAP={metrics.aap:.4f} "
        f"AST={metrics.ast:.4f} APT={metrics.apt:.4f} "
        f"local/migrated={metrics.k_local}/{metrics.k_migrated}"
    )
    print(f"wrote {metrics_path}")
    return 0


def _episode_job(payload):
    axis, value, policy, seed, cfg_dict, vehicles = payload
    cfg = ScenarioConfig(**cfg_dict)
    traj = synth_trace(cfg, vehicles, seed)
    metrics, _, _ = run_episode(policy, cfg, traj, seed)
    return axis, value, policy, seed, metrics


def apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "arrival_prob":
        return dataclasses.replace(cfg, arrival_prob=value)
    if axis == "cpu_range":
        low, high = value, cfg.cpu_range_hz[1]
        return dataclasses.replace(cfg, cpu_range_hz=(low, high))
    raise ValueError(f"unknown sweep axis {axis!r}")


def run_sweep(
    cfg: ScenarioConfig,
    axis: str,
    values: list[float],
    policies: list[str],
    seeds: list[int],
    vehicles: int = DEFAULT_VEHICLES,
    max_workers: int | None = None,
) -> list[tuple]:
    """Cross product of (value, policy, seed) episodes; returns rows of
    (axis, value, policy, seed, EpisodeMetrics) in deterministic order."""
    jobs = []
    for value in values:
        cfg_v = apply_axis(cfg, axis, value)
        for policy in policies:
            for seed in seeds:
                jobs.append((axis, value, policy, seed, dataclasses.asdict(cfg_v), vehicles))
    workers = max_workers if max_workers is not None else _threads()
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_episode_job, jobs))
    else:
        results = [_episode_job(j) for j in jobs]
    results.sort(key=lambda r: (r[1], r[2], r[3]))
    return results


def write_sweep_csv(path, results: list[tuple]) -> None:
    """Aggregate table: mean metric over seeds per (value, policy)."""
    import csv as _csv
    from collections import defaultdict

    groups = defaultdict(list)
    for axis, value, policy, seed, m in results:
        groups[(axis, value, policy)].append(m)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# vecsim-sweep-v1\n")
        writer = _csv.writer(fh)
        writer.writerow(
            ["axis", "value", "policy", "seeds", "asr", "cr", "aap", "ast", "apt", "p_local", "p_migrated"]
        )
        for (axis, value, policy), ms in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2])):
            n = len(ms)
            mean = lambda f: repr(sum(getattr(m, f) for m in ms) / n)
            writer.writerow(
                [axis, repr(float(value)), policy, n] + [mean(f) for f in ("asr", "cr", "aap", "ast", "apt", "p_local", "p_migrated")]
            )


def read_sweep_csv(path) -> list[dict]:
    import csv as _csv

    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header.startswith("# vecsim-sweep-v1"):
            raise ValueError(f"unknown sweep schema: {header!r}")
        for raw in _csv.DictReader(fh):
            row = {"axis": raw["axis"], "policy": raw["policy"], "seeds": int(raw["seeds"])}
            for key in ("value", "asr", "cr", "aap", "ast", "apt", "p_local", "p_migrated"):
                row[key] = float(raw[key])
            rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    cfg = _load_scenario(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    policies = [p for p in args.policies.split(",") if p.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not values or not policies or not seeds:
        print("sweep requires nonempty --values, --policies, --seeds", file=sys.stderr)
        return USAGE_EXIT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(cfg, args.axis, values, policies, seeds, vehicles=args.vehicles)
    table = out / f"sweep_{args.axis}.csv"
    write_sweep_csv(table, results)
    print(f"ran {len(results)} episodes; wrote {table}")
    return 0


def cmd_verify(args) -> int:
    results = run_suite(args.suite)
    report = results_report(results)
    for check in results:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: {check.detail} ({check.seconds:.1f}s)")
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2), encoding="utf-8")
        print(f"wrote {args.report}")
    return 0 if report["passed"] else 1


def cmd_bridge(args) -> int:
    cfg = _load_scenario(args)
    seed = args.seed if args.seed is not None else cfg.rng_seed
    traj = _trajectories(cfg, args, seed)
    endpoint = "tcp" if args.port is not None else "stdio"
    bridge_mod.serve(
        cfg,
        traj,
        endpoint=endpoint,
        port=args.port or 0,
        seed_base=seed,
        ready_callback=lambda p: print(f"listening on 127.0.0.1:{p}", file=sys.stderr, flush=True),
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecsim",
        description="Vehicular edge computing offloading simulator and solver suite",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_policy=False):
        p.add_argument("--config", help="scenario config file (flat key = value)")
        p.add_argument("--seed", type=int, default=None, help="episode seed (overrides config)")
        p.add_argument("--vehicles", type=int, default=DEFAULT_VEHICLES, help="synthetic trace size")
        p.add_argument("--trace", help="trajectory CSV instead of a synthetic trace")
        if with_policy:
            p.add_argument("--policy", required=True, help="game | orm | orl | random")

    p_run = sub.add_parser("run", help="run one episode and write metrics CSVs")
    add_common(p_run, with_policy=True)
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="cross-product parameter sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=["arrival_prob", "cpu_range"])
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--policies", default="game,orm,orl,random")
    p_sweep.add_argument("--seeds", default="1,2,3")
    p_sweep.add_argument("--out", default="out")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run property suites")
    p_verify.add_argument("--suite", default="all", help="epg | allocators | dynamics | all")
    p_verify.add_argument(
        "--report", default="verify_report.json", help="machine-readable report path"
    )
    p_verify.set_defaults(func=cmd_verify)

    p_bridge = sub.add_parser("bridge", help="serve the environment protocol")
    add_common(p_bridge)
    p_bridge.add_argument("--port", type=int, default=None, help="TCP port (default: stdio)")
    p_bridge.set_defaults(func=cmd_bridge)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
