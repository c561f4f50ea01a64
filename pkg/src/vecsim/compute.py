"""Per-edge CPU-share allocation and task timing.

Minimizing the sum of execution times d_k*c_k / share_k under a total budget
has the closed-form optimum share_k proportional to sqrt(d_k*c_k), with the
budget fully spent (allocating less is never optimal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from vecsim.config import EdgeNode, ScenarioConfig, TaskSpec


@dataclass
class ComputeAssignment:
    """CPU shares and derived times for the tasks pooled at the edges."""

    c: dict[tuple[int, int], float] = field(default_factory=dict)  # (task id, edge) -> Hz
    exec_time: dict[int, float] = field(default_factory=dict)  # task id -> s
    wired_time: dict[int, float] = field(default_factory=dict)  # task id -> s
    processing_time: dict[int, float] = field(default_factory=dict)  # task id -> s


def kkt_allocate(tasks: list[TaskSpec], c_e: float) -> dict[int, float]:
    """Split the CPU budget `c_e` across `tasks`, shares ~ sqrt(size*cycles)."""
    if c_e <= 0:
        raise ValueError("edge CPU budget must be positive")
    if not tasks:
        return {}
    weights = np.sqrt([t.cycles for t in tasks])
    shares = c_e * weights / weights.sum()
    return {t.id: float(s) for t, s in zip(tasks, shares)}


def edge_distance(a: EdgeNode, b: EdgeNode) -> float:
    return math.hypot(a.location[0] - b.location[0], a.location[1] - b.location[1])


def wired_time(task: TaskSpec, from_e: EdgeNode, to_e: EdgeNode, cfg: ScenarioConfig) -> float:
    """Backhaul transfer time when the executing edge differs from the
    uploading edge; zero for local execution."""
    if from_e.id == to_e.id:
        return 0.0
    dist = edge_distance(from_e, to_e)
    return task.size_bits * dist * cfg.distance_discount_per_m / cfg.wired_rate_bps


def processing_time(
    task: TaskSpec,
    target: EdgeNode,
    assignment: ComputeAssignment,
    cfg: ScenarioConfig,
    edges: list[EdgeNode],
) -> float:
    """Wired transfer plus execution at the target's allocated share."""
    share = assignment.c.get((task.id, target.id))
    if share is None:
        raise KeyError(f"task {task.id} unallocated at edge {target.id}")
    w = wired_time(task, edges[task.origin_edge], target, cfg)
    return w + task.cycles / share
