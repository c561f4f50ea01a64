#!/usr/bin/env python3
"""Train the offloading policy against a live environment bridge and report
its evaluation score next to the baselines.

Requires both packages installed (`pip install -e . -e ./learner`).
"""

import argparse
import sys
import tempfile
from pathlib import Path

import numpy as np

SCENARIO = """
num_edges = 2
edge_grid = 2x1
area_side_m = 1000
horizon_slots = 60
arrival_prob = 0.5
"""


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="scenario file (default: built-in 2-edge toy)")
    parser.add_argument("--vehicles", type=int, default=8)
    parser.add_argument("--updates", type=int, default=300)
    parser.add_argument("--train-seed", type=int, default=1)
    parser.add_argument("--eval-seeds", default="9001,9002,9003")
    args = parser.parse_args()

    from mad4pg import BridgeClient, Hyperparams
    from mad4pg.client import bridge_argv
    from mad4pg.learner import evaluate_policy, train
    from mad4pg.nets import ObsEncoder
    from vecsim.config import ScenarioConfig, load_config, parse_config_text

    if args.config:
        cfg_path = Path(args.config)
        cfg = load_config(cfg_path)
    else:
        cfg = parse_config_text(SCENARIO)
        tmp = tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False)
        tmp.write(SCENARIO)
        tmp.close()
        cfg_path = Path(tmp.name)

    E, T = cfg.num_edges, cfg.horizon_slots
    enc = ObsEncoder(E, T)
    action_width = 10 * E
    hp = Hyperparams(
        gamma=0.5, batch=256, buffer=20_000, lr=2e-3, policy_lr=1e-4,
        t_tgt=5, soft_rate=0.05, t_act=100, n_actors=2, n_step=5,
        policy_hidden=(64, 64, 64), critic_hidden=(64, 64, 32),
    )

    def make_client():
        return BridgeClient(argv=bridge_argv(cfg_path, args.vehicles))

    print(f"training {args.updates} learner updates on {E} edges, T={T} ...")
    learner = train(
        make_client, enc.width, E, action_width, hp, enc,
        n_updates=args.updates, train_seed=args.train_seed,
        warmup_transitions=1200, episodes_per_round=1, updates_per_round=5,
    )
    eval_seeds = [int(s) for s in args.eval_seeds.split(",")]
    with make_client() as client:
        cr = evaluate_policy(client, learner, eval_seeds)
    print(f"evaluation cumulative reward over seeds {eval_seeds}: {cr:.2f}")

    import subprocess

    for policy in ("random", "orl", "orm", "game"):
        crs = []
        for seed in eval_seeds:
            with tempfile.TemporaryDirectory() as outd:
                subprocess.run(
                    [sys.executable, "-m", "vecsim.cli", "run", "--config", str(cfg_path),
                     "--policy", policy, "--seed", str(seed),
                     "--vehicles", str(args.vehicles), "--out", outd],
                    check=True, capture_output=True,
                )
                from vecsim.engine import read_metrics_csv

                _, summary = read_metrics_csv(Path(outd) / f"metrics_{policy}_seed{seed}.csv")
                crs.append(summary["cr"])
        print(f"  {policy:>7}: CR {np.mean(crs):.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
