"""Episode orchestration: arrivals, per-slot scheduling through a pluggable
offloading policy, counterfactual rewards, metrics, and baselines."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from vecsim.channel import ChannelRealization, realize_channel
from vecsim.config import EdgeNode, ScenarioConfig, TaskSpec, build_edges, require_valid
from vecsim.game import (
    BRCertificate,
    OffloadProfile,
    SlotGame,
    best_response_dynamics,
    null_contribution_eval,
    utility,
)
from vecsim.mobility import CoverageIndex, TrajectorySet, build_coverage
from vecsim.power import PowerSolverParams

OBS_CAP = 10  # tasks per edge visible to external policies
OBS_FIELDS_PER_TASK = 4  # distance, size, cycles, deadline
POLICIES = ("game", "orm", "orl", "random")


@dataclass
class Snapshot:
    """One slot's world state, with the power stage pre-solved.

    `observations[e]` is [edge id, slot, then per visible task: distance to
    the edge, size in bits, total cycles, deadline in s], zero padded;
    `obs_mask[e, i]` marks valid task slots. Tasks beyond the per-edge cap
    are listed in `over_cap` and are forced to execute locally whenever the
    profile comes from an external (observation-limited) policy.
    """

    slot: int
    cfg: ScenarioConfig
    edges: list[EdgeNode]
    tasks: list[TaskSpec]
    game: SlotGame
    observations: np.ndarray  # (E, 2 + 4*OBS_CAP)
    obs_mask: np.ndarray  # (E, OBS_CAP) bool
    visible: list[np.ndarray]  # per edge, task indices shown in observation
    over_cap: np.ndarray  # task indices hidden from external policies


def arrivals(
    slot: int,
    cov: CoverageIndex,
    cfg: ScenarioConfig,
    seed: int,
    first_task_id: int = 0,
) -> list[TaskSpec]:
    """Spawn tasks for covered vehicles, each with probability arrival_prob.

    Sizes and deadlines are uniform in their configured ranges; draws are
    deterministic per (seed, slot) and consumed in vehicle-row order.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xA881, slot])))
    tasks = []
    next_id = first_task_id
    if slot >= cov.slot_count:
        return tasks
    lo_d, hi_d = cfg.task_size_bits_range
    lo_t, hi_t = cfg.deadline_s_range
    for row in range(cov.nearest.shape[0]):
        u_arrive, u_size, u_deadline = rng.random(3)
        origin = int(cov.nearest[row, slot])
        if origin < 0:
            continue
        if u_arrive >= cfg.arrival_prob:
            continue
        tasks.append(
            TaskSpec(
                id=next_id,
                vehicle=row,
                birth_slot=slot,
                size_bits=lo_d + u_size * (hi_d - lo_d),
                cycles_per_bit=cfg.cycles_per_bit,
                deadline_s=lo_t + u_deadline * (hi_t - lo_t),
                origin_edge=origin,
            )
        )
        next_id += 1
    return tasks


def build_snapshot(
    slot: int,
    cov: CoverageIndex,
    ch: ChannelRealization,
    tasks: list[TaskSpec],
    cfg: ScenarioConfig,
    edges: list[EdgeNode],
    power_params: PowerSolverParams | None = None,
) -> Snapshot:
    E = len(edges)
    K = len(tasks)
    if K and slot < cov.slot_count:
        rows = np.asarray([t.vehicle for t in tasks], dtype=int)
        gain2 = ch.gain2[rows, slot, :]
    else:
        gain2 = np.zeros((K, E))
    game = SlotGame(cfg, edges, tasks, gain2, power_params)
    obs = np.zeros((E, 2 + OBS_FIELDS_PER_TASK * OBS_CAP))
    mask = np.zeros((E, OBS_CAP), dtype=bool)
    visible: list[np.ndarray] = []
    over: list[int] = []
    for e in range(E):
        obs[e, 0] = e
        obs[e, 1] = slot
        own = game.own_tasks[e]
        keep = own[:OBS_CAP]
        over.extend(int(k) for k in own[OBS_CAP:])
        visible.append(keep)
        for i, k in enumerate(keep):
            t = tasks[k]
            base = 2 + OBS_FIELDS_PER_TASK * i
            obs[e, base] = cov.dist[t.vehicle, slot, e]
            obs[e, base + 1] = t.size_bits
            obs[e, base + 2] = t.cycles
            obs[e, base + 3] = t.deadline_s
            mask[e, i] = True
    return Snapshot(
        slot=slot,
        cfg=cfg,
        edges=edges,
        tasks=tasks,
        game=game,
        observations=obs,
        obs_mask=mask,
        visible=visible,
        over_cap=np.asarray(sorted(over), dtype=int),
    )


# ---- baselines ----------------------------------------------------------------


def baseline_orl(snap: Snapshot) -> OffloadProfile:
    """Every task executes at the edge that received it."""
    return snap.game.to_profile(snap.game.origin.copy())


def baseline_orm(snap: Snapshot) -> OffloadProfile:
    """Greedy migrate-always: each task goes to the foreign edge with the
    best CPU per already-assigned task, never home unless it is the only edge."""
    g = snap.game
    counts = np.zeros(g.E)
    cpu = g.cpu_hz
    assign = np.empty(g.K, dtype=int)
    for k in range(g.K):
        score = cpu / (counts + 1.0)
        if g.E > 1:
            score = score.copy()
            score[g.origin[k]] = -math.inf
        target = int(np.argmax(score))
        assign[k] = target
        counts[target] += 1.0
    return g.to_profile(assign)


def baseline_random(snap: Snapshot, seed: int) -> OffloadProfile:
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, 0x7A2D, snap.slot]))
    )
    return snap.game.to_profile(rng.integers(0, snap.game.E, size=snap.game.K))


def policy_game(
    snap: Snapshot,
    epsilon: float = 1e-6,
    max_sweeps: int = 50,
    exhaustive_cap: int | None = None,
) -> tuple[OffloadProfile, BRCertificate]:
    """Improvement dynamics warm-started from the better of the two
    single-minded baselines."""
    g = snap.game
    cands = [g.to_array(baseline_orl(snap)), g.to_array(baseline_orm(snap))]
    scores = [g.score(a) for a in cands]
    init = g.to_profile(cands[int(np.argmax(scores))])
    kwargs = {}
    if exhaustive_cap is not None:
        kwargs["exhaustive_cap"] = exhaustive_cap
    return best_response_dynamics(g, epsilon=epsilon, init=init, max_sweeps=max_sweeps, **kwargs)


# ---- episode loop ---------------------------------------------------------------


@dataclass
class SlotOutcome:
    slot: int
    task_ids: np.ndarray
    assign: np.ndarray
    upload_s: np.ndarray
    processing_s: np.ndarray
    service_s: np.ndarray
    served: np.ndarray
    ratios: np.ndarray  # (E,)
    rewards: np.ndarray  # (E,) marginal contributions
    system_reward: float
    null_utilities: np.ndarray  # (E,) utility with each edge voided
    k_total: int
    k_serviced: int
    k_local: int
    k_migrated: int


@dataclass
class EpisodeMetrics:
    asr: float
    cr: float
    aap: float
    ast: float
    apt: float
    p_local: float
    p_migrated: float
    k_total: int
    k_serviced: int
    k_local: int
    k_migrated: int
    slots: int
    seed: int
    policy: str


def score_slot(snap: Snapshot, profile: OffloadProfile) -> SlotOutcome:
    """Evaluate a decided profile: times, ratios, and per-edge rewards
    r_e = system reward minus the system reward with e voided."""
    g = snap.game
    u, ratios, times = utility(profile, g)
    nulls = np.asarray([null_contribution_eval(profile, e, g) for e in range(g.E)])
    rewards = u - nulls
    assign = g.to_array(profile)
    local = assign == g.origin
    return SlotOutcome(
        slot=snap.slot,
        task_ids=g.task_ids.copy(),
        assign=assign,
        upload_s=times.upload_s,
        processing_s=times.processing_s,
        service_s=times.service_s,
        served=times.served,
        ratios=ratios,
        rewards=rewards,
        system_reward=u,
        null_utilities=nulls,
        k_total=g.K,
        k_serviced=int(times.served.sum()),
        k_local=int(local.sum()),
        k_migrated=int(g.K - local.sum()),
    )


def decide_profile(policy, snap: Snapshot, seed: int):
    """Resolve a policy name or callable into a profile (plus an optional
    dynamics certificate for the game policy)."""
    if callable(policy):
        return policy(snap), None
    if policy == "orl":
        return baseline_orl(snap), None
    if policy == "orm":
        return baseline_orm(snap), None
    if policy == "random":
        return baseline_random(snap, seed), None
    if policy == "game":
        profile, cert = policy_game(snap)
        return profile, cert
    raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES} or a callable")


def run_episode(
    policy,
    cfg: ScenarioConfig,
    traj: TrajectorySet,
    seed: int,
    power_params: PowerSolverParams | None = None,
    collect_dynamics: bool = False,
) -> tuple[EpisodeMetrics, list[SlotOutcome], list]:
    """Simulate one episode under a policy; deterministic per inputs."""
    require_valid(cfg)
    edges = build_edges(cfg, seed)
    cov = build_coverage(traj, edges)
    ch = realize_channel(cov, cfg, seed)
    outcomes = []
    dynamics_rows = []
    next_task_id = 0
    for t in range(cfg.horizon_slots):
        tasks = arrivals(t, cov, cfg, seed, first_task_id=next_task_id)
        next_task_id += len(tasks)
        snap = build_snapshot(t, cov, ch, tasks, cfg, edges, power_params)
        profile, cert = decide_profile(policy, snap, seed)
        outcomes.append(score_slot(snap, profile))
        if collect_dynamics and cert is not None:
            for sweep, e, moved, u0, u1 in cert.trace:
                dynamics_rows.append((t, sweep, e, moved, u0, u1))
    metrics = aggregate_metrics(outcomes, cfg, seed, policy if isinstance(policy, str) else "external")
    return metrics, outcomes, dynamics_rows


def aggregate_metrics(
    outcomes: list[SlotOutcome], cfg: ScenarioConfig, seed: int, policy: str
) -> EpisodeMetrics:
    k_total = sum(o.k_total for o in outcomes)
    k_serviced = sum(o.k_serviced for o in outcomes)
    k_local = sum(o.k_local for o in outcomes)
    k_migrated = sum(o.k_migrated for o in outcomes)
    cr = float(sum(o.system_reward for o in outcomes))
    aap = float(sum(o.rewards.sum() for o in outcomes)) / cfg.num_edges
    if k_total:
        service = np.concatenate([o.service_s for o in outcomes])
        processing = np.concatenate([o.processing_s for o in outcomes])
        ast = float(service.mean())
        apt = float(processing.mean())
        asr = k_serviced / k_total
        p_local = k_local / k_total
        p_migrated = k_migrated / k_total
    else:
        ast = apt = 0.0
        asr = 1.0  # vacuous: no task was requested
        p_local = p_migrated = 0.0
    return EpisodeMetrics(
        asr=asr,
        cr=cr,
        aap=aap,
        ast=ast,
        apt=apt,
        p_local=p_local,
        p_migrated=p_migrated,
        k_total=k_total,
        k_serviced=k_serviced,
        k_local=k_local,
        k_migrated=k_migrated,
        slots=len(outcomes),
        seed=seed,
        policy=policy,
    )


# ---- CSV serialization -----------------------------------------------------------

METRICS_SCHEMA = "vecsim-metrics-v1"
_SLOT_COLS = (
    "kind",
    "slot",
    "k_total",
    "k_serviced",
    "k_local",
    "k_migrated",
    "reward",
    "mean_service_s",
    "mean_processing_s",
)
_SUMMARY_COLS = (
    "asr",
    "cr",
    "aap",
    "ast",
    "apt",
    "p_local",
    "p_migrated",
    "seed",
    "policy",
)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_metrics_csv(path, outcomes: list[SlotOutcome], metrics: EpisodeMetrics, n_edges: int) -> None:
    cols = list(_SLOT_COLS)
    cols += [f"ratio_e{e}" for e in range(n_edges)]
    cols += [f"reward_e{e}" for e in range(n_edges)]
    cols += list(_SUMMARY_COLS)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {METRICS_SCHEMA} edges={n_edges}\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for o in outcomes:
            mean_service = float(o.service_s.mean()) if o.k_total else 0.0
            mean_processing = float(o.processing_s.mean()) if o.k_total else 0.0
            row = [
                "slot",
                o.slot,
                o.k_total,
                o.k_serviced,
                o.k_local,
                o.k_migrated,
                _fmt(o.system_reward),
                _fmt(mean_service),
                _fmt(mean_processing),
            ]
            row += [_fmt(v) for v in o.ratios]
            row += [_fmt(v) for v in o.rewards]
            row += [""] * len(_SUMMARY_COLS)
            writer.writerow(row)
        summary = ["summary", metrics.slots, metrics.k_total, metrics.k_serviced,
                   metrics.k_local, metrics.k_migrated, "", "", ""]
        summary += [""] * (2 * n_edges)
        summary += [
            _fmt(metrics.asr),
            _fmt(metrics.cr),
            _fmt(metrics.aap),
            _fmt(metrics.ast),
            _fmt(metrics.apt),
            _fmt(metrics.p_local),
            _fmt(metrics.p_migrated),
            str(metrics.seed),
            metrics.policy,
        ]
        writer.writerow(summary)


def read_metrics_csv(path) -> tuple[list[dict], dict]:
    """Round-trip reader for the episode metrics CSV."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if not header.startswith(f"# {METRICS_SCHEMA}"):
            raise ValueError(f"unknown metrics schema: {header!r}")
        reader = csv.DictReader(fh)
        slot_rows = []
        summary = None
        for raw in reader:
            if raw["kind"] == "slot":
                slot_rows.append(
                    {
                        k: (float(v) if ("." in v or "inf" in v or "e" in v.lower()) else int(v))
                        for k, v in raw.items()
                        if v not in ("", None) and k != "kind"
                    }
                )
            elif raw["kind"] == "summary":
                summary = {k: v for k, v in raw.items() if v not in ("", None) and k != "kind"}
                for k in ("asr", "cr", "aap", "ast", "apt", "p_local", "p_migrated"):
                    summary[k] = float(summary[k])
                for k in ("slot", "k_total", "k_serviced", "k_local", "k_migrated", "seed"):
                    summary[k] = int(summary[k])
    if summary is None:
        raise ValueError("metrics CSV missing summary row")
    return slot_rows, summary


def write_dynamics_csv(path, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# vecsim-dynamics-v1\n")
        writer = csv.writer(fh)
        writer.writerow(["slot", "sweep", "edge", "moved", "u_before", "u_after"])
        for slot, sweep, e, moved, u0, u1 in rows:
            writer.writerow([slot, sweep, e, _fmt(moved), _fmt(u0), _fmt(u1)])


def read_dynamics_csv(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header.startswith("# vecsim-dynamics-v1"):
            raise ValueError(f"unknown dynamics schema: {header!r}")
        for raw in csv.DictReader(fh):
            rows.append(
                (
                    int(raw["slot"]),
                    int(raw["sweep"]),
                    int(raw["edge"]),
                    raw["moved"] == "True",
                    float(raw["u_before"]),
                    float(raw["u_after"]),
                )
            )
    return rows
