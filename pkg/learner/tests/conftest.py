import subprocess
import sys
from pathlib import Path

import pytest

TOY_CFG = """
num_edges = 2
edge_grid = 2x1
area_side_m = 1000
horizon_slots = 60
arrival_prob = 0.5
cpu_range_hz = 3e9, 10e9
"""

TOY_VEHICLES = 8


@pytest.fixture(scope="session")
def toy_cfg_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("scenario") / "toy.cfg"
    path.write_text(TOY_CFG)
    return path


def run_reference_policy(cfg_path, policy: str, seed: int, out_dir) -> dict:
    """Run the simulator CLI and return the episode summary metrics."""
    subprocess.run(
        [
            sys.executable, "-m", "vecsim.cli", "run",
            "--config", str(cfg_path), "--policy", policy,
            "--seed", str(seed), "--vehicles", str(TOY_VEHICLES),
            "--out", str(out_dir),
        ],
        check=True,
        capture_output=True,
    )
    metrics_csv = Path(out_dir) / f"metrics_{policy}_seed{seed}.csv"
    summary = {}
    lines = metrics_csv.read_text().splitlines()
    header = lines[1].split(",")
    for line in lines[2:]:
        row = dict(zip(header, line.split(",")))
        if row.get("kind") == "summary":
            for key in ("asr", "cr", "aap", "ast", "apt"):
                summary[key] = float(row[key])
    return summary
