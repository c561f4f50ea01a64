"""Offloading as a game among edge nodes.

Players are edges; a strategy assigns each of the edge's own arrived tasks to
an executing edge. Every edge shares the same utility: the slot's total
service ratio. The marginal-contribution potential (utility minus the
utility with the edge voided) changes exactly as the utility does under any
unilateral deviation, so improvement dynamics terminate.

Power allocation depends only on who uploads, never on where tasks execute,
so it is solved once per slot and shared across profile evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vecsim.compute import edge_distance, kkt_allocate
from vecsim.config import EdgeNode, ScenarioConfig, TaskSpec
from vecsim.power import PowerAssignment, PowerSolverParams, UplinkProblem, solve_uplink_power

BR_EXHAUSTIVE_CAP = 5  # joint search up to this many own tasks, then coordinate moves
DEFAULT_EPSILON = 1e-6

# Enumeration bounds for the brute-force equilibrium oracle.
BRUTE_FORCE_MAX_TASKS = 6
BRUTE_FORCE_MAX_EDGES = 3


@dataclass(frozen=True)
class OffloadProfile:
    """Joint strategy: executing edge for every arrived task of the slot."""

    assign: dict[int, int]  # task id -> edge id

    def target_of(self, task_id: int) -> int:
        return self.assign[task_id]


@dataclass(frozen=True)
class GameEval:
    utility: float
    per_edge_ratio: np.ndarray  # (E,)
    per_edge_potential_gain: np.ndarray  # (E,) utility minus voided utility


@dataclass(frozen=True)
class TaskTimes:
    """Per-task service breakdown for one evaluated profile."""

    upload_s: np.ndarray  # m
    processing_s: np.ndarray  # n = wired + execution
    service_s: np.ndarray  # psi = m + n
    served: np.ndarray  # bool, psi <= deadline


class SlotGame:
    """One slot's offloading problem with the power stage pre-solved.

    Holds the arrays needed to score any profile in O(K): upload times are
    fixed by the power solution, and a task's success at a target depends
    only on the target's pooled sqrt(size*cycles) load.
    """

    def __init__(
        self,
        cfg: ScenarioConfig,
        edges: list[EdgeNode],
        tasks: list[TaskSpec],
        gain2: np.ndarray,
        power_params: PowerSolverParams | None = None,
    ):
        self.cfg = cfg
        self.edges = edges
        self.tasks = list(tasks)
        self.E = len(edges)
        self.K = len(tasks)
        self.origin = np.asarray([t.origin_edge for t in tasks], dtype=int)
        self.vid = np.asarray([t.vehicle for t in tasks], dtype=int)
        self.task_ids = np.asarray([t.id for t in tasks], dtype=int)
        self.uplinks = UplinkProblem(
            origin=self.origin,
            gain2=np.asarray(gain2, dtype=float).reshape(self.K, self.E),
            vid=self.vid,
            edge_power_mw=np.asarray([e.max_power_mw for e in edges]),
            noise_mw=cfg.noise_mw,
            bandwidth_hz=cfg.bandwidth_hz,
        )
        self.power: PowerAssignment = solve_uplink_power(self.uplinks, power_params)
        sizes = np.asarray([t.size_bits for t in tasks])
        deadlines = np.asarray([t.deadline_s for t in tasks])
        self.upload_s = _upload_times(sizes, self.power.sinr, cfg)
        self.cycles = np.asarray([t.cycles for t in tasks])
        self.sqrt_load = np.sqrt(self.cycles)
        self.cpu_hz = np.asarray([e.cpu_hz for e in edges])
        dist = np.asarray(
            [[edge_distance(a, b) for b in edges] for a in edges]
        )  # (E, E)
        if self.K:
            self.wired_s = (
                sizes[:, None] * dist[self.origin] * cfg.distance_discount_per_m / cfg.wired_rate_bps
            )
            np.put_along_axis(self.wired_s, self.origin[:, None], 0.0, axis=1)
            slack = deadlines[:, None] - self.upload_s[:, None] - self.wired_s
            with np.errstate(invalid="ignore"):
                self.theta = self.cpu_hz[None, :] * slack / self.sqrt_load[:, None]
            self.theta = np.nan_to_num(self.theta, nan=-math.inf)
        else:
            self.wired_s = np.zeros((0, self.E))
            self.theta = np.zeros((0, self.E))
        counts = np.bincount(self.origin, minlength=self.E) if self.K else np.zeros(self.E, int)
        self.origin_counts = counts
        self.n_empty = int((counts == 0).sum())
        self.weight = 1.0 / counts[self.origin] if self.K else np.zeros(0)
        self.own_tasks = [np.flatnonzero(self.origin == e) for e in range(self.E)]

    # ---- profile conversions -------------------------------------------------

    def to_array(self, profile: OffloadProfile) -> np.ndarray:
        return np.asarray([profile.assign[t.id] for t in self.tasks], dtype=int)

    def to_profile(self, assign: np.ndarray) -> OffloadProfile:
        return OffloadProfile(
            assign={int(t.id): int(a) for t, a in zip(self.tasks, assign)}
        )

    def validate_profile(self, profile: OffloadProfile) -> None:
        ids = {t.id for t in self.tasks}
        if set(profile.assign) != ids:
            raise ValueError("profile must assign exactly the slot's arrived tasks")
        bad = [e for e in profile.assign.values() if not 0 <= e < self.E]
        if bad:
            raise ValueError(f"profile targets invalid edges: {bad}")

    # ---- fast scorer ----------------------------------------------------------

    def score(self, assign: np.ndarray) -> float:
        """Total service ratio of a profile given as a target array."""
        if self.K == 0:
            return float(self.E)
        loads = np.bincount(assign, weights=self.sqrt_load, minlength=self.E)
        succ = loads[assign] <= self.theta[np.arange(self.K), assign]
        return float(self.weight @ succ) + self.n_empty

    def score_block(
        self, own: np.ndarray, candidates: np.ndarray, assign: np.ndarray
    ) -> np.ndarray:
        """Score many joint reassignments of `own` tasks at once.

        `candidates` is (C, len(own)) target matrix; other tasks keep their
        targets from `assign`. Returns (C,) utilities.
        """
        C = candidates.shape[0]
        other = np.setdiff1d(np.arange(self.K), own, assume_unique=False)
        base = np.bincount(
            assign[other], weights=self.sqrt_load[other], minlength=self.E
        )
        utilities = np.empty(C)
        theta_other = self.theta[other, assign[other]]
        w_other = self.weight[other]
        g_other = assign[other]
        theta_own = self.theta[own]  # (n, E)
        w_own = self.weight[own]
        s_own = self.sqrt_load[own]
        rows = np.arange(len(own))
        chunk = max(1, int(2_000_000 / max(1, self.K)))
        for lo in range(0, C, chunk):
            cand = candidates[lo : lo + chunk]
            n = cand.shape[0]
            loads = np.tile(base, (n, 1))
            np.add.at(loads, (np.repeat(np.arange(n), len(own)), cand.ravel()), np.tile(s_own, n))
            succ_own = np.take_along_axis(loads, cand, axis=1) <= theta_own[rows, cand]
            u = succ_own @ w_own
            if other.size:
                succ_other = loads[:, g_other] <= theta_other[None, :]
                u = u + succ_other @ w_other
            utilities[lo : lo + n] = u
        return utilities + self.n_empty

    # ---- reference evaluation (full allocation chain) -------------------------

    def task_times(self, profile: OffloadProfile) -> TaskTimes:
        """Recompute per-task times through the allocation chain: CPU pools
        via the closed-form split, wired transfer, execution, deadlines."""
        self.validate_profile(profile)
        assign = self.to_array(profile)
        return self._task_times_array(assign, np.ones(self.K, dtype=bool), self.upload_s)

    def _task_times_array(
        self, assign: np.ndarray, active: np.ndarray, upload_s: np.ndarray
    ) -> TaskTimes:
        deadlines = np.asarray([t.deadline_s for t in self.tasks])
        n = np.full(self.K, math.inf)
        psi = np.full(self.K, math.inf)
        for g in range(self.E):
            pool = [k for k in np.flatnonzero((assign == g) & active)]
            if not pool:
                continue
            shares = kkt_allocate([self.tasks[k] for k in pool], self.edges[g].cpu_hz)
            for k in pool:
                exec_s = self.cycles[k] / shares[self.tasks[k].id]
                n[k] = self.wired_s[k, g] + exec_s
                psi[k] = upload_s[k] + n[k]
        with np.errstate(invalid="ignore"):
            served = (psi <= deadlines) & active
        return TaskTimes(upload_s=upload_s, processing_s=n, service_s=psi, served=served)

    def utility_from_times(self, times: TaskTimes, voided_edge: int | None = None) -> tuple[float, np.ndarray]:
        ratios = np.ones(self.E)
        for e in range(self.E):
            own = self.own_tasks[e]
            if own.size == 0:
                continue
            if e == voided_edge:
                ratios[e] = 0.0
            else:
                ratios[e] = float(times.served[own].mean())
        return float(ratios.sum()), ratios


def _upload_times(sizes: np.ndarray, sinr: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    out = np.full(sizes.shape, math.inf)
    pos = sinr > 0
    out[pos] = sizes[pos] / (cfg.bandwidth_hz * np.log2(1.0 + sinr[pos]))
    return out


def _game_of(slot) -> SlotGame:
    if isinstance(slot, SlotGame):
        return slot
    return slot.game  # engine.Snapshot carries a SlotGame


def utility(profile: OffloadProfile, slot) -> tuple[float, np.ndarray, TaskTimes]:
    """Utility of a profile through the reference allocation chain."""
    g = _game_of(slot)
    times = g.task_times(profile)
    u, ratios = g.utility_from_times(times)
    return u, ratios, times


def null_contribution_eval(profile: OffloadProfile, e: int, slot) -> float:
    """Utility with edge `e` voided: its own arrived tasks go unserved, its
    uplinks transmit nothing (removing their interference), and it still
    executes tasks migrated to it by other edges."""
    g = _game_of(slot)
    g.validate_profile(profile)
    keep = g.origin != e
    p_void = np.where(keep, g.power.power_mw, 0.0)
    sinr_void = g.uplinks.sinr(p_void)
    sizes = np.asarray([t.size_bits for t in g.tasks])
    upload_void = _upload_times(sizes, sinr_void, g.cfg)
    assign = g.to_array(profile)
    times = g._task_times_array(assign, keep, upload_void)
    u, _ = g.utility_from_times(times, voided_edge=e)
    return u


def evaluate(profile: OffloadProfile, slot, cfg: ScenarioConfig | None = None) -> GameEval:
    """Full evaluation: utility, per-edge ratios, and each edge's marginal
    contribution (the potential)."""
    g = _game_of(slot)
    u, ratios, _ = utility(profile, g)
    gains = np.asarray([u - null_contribution_eval(profile, e, g) for e in range(g.E)])
    return GameEval(utility=u, per_edge_ratio=ratios, per_edge_potential_gain=gains)


def unilateral_deviation_check(
    profile: OffloadProfile, e: int, alt: OffloadProfile, slot
) -> tuple[float, float]:
    """Return (delta utility, delta potential of `e`) for a deviation of `e`.

    The two must match: the voided term in the potential does not depend on
    the deviator's own strategy.
    """
    g = _game_of(slot)
    g.validate_profile(profile)
    g.validate_profile(alt)
    for t in g.tasks:
        if profile.assign[t.id] != alt.assign[t.id] and t.origin_edge != e:
            raise ValueError(f"not a unilateral deviation: task {t.id} of edge {t.origin_edge} changed")
    u_before, _, _ = utility(profile, g)
    u_after, _, _ = utility(alt, g)
    f_before = u_before - null_contribution_eval(profile, e, g)
    f_after = u_after - null_contribution_eval(alt, e, g)
    return u_after - u_before, f_after - f_before


@dataclass(frozen=True)
class BRCertificate:
    kind: str  # "epsilon_equilibrium" | "coordinate_stationary" | "sweep_limit"
    sweeps: int
    moves: int
    utilities: tuple  # adopted utility after each move
    trace: tuple  # rows (sweep, edge, moved, u_before, u_after)


def best_response_dynamics(
    slot,
    epsilon: float = DEFAULT_EPSILON,
    init: OffloadProfile | None = None,
    max_sweeps: int = 50,
    exhaustive_cap: int = BR_EXHAUSTIVE_CAP,
) -> tuple[OffloadProfile, BRCertificate]:
    """Round-robin improvement dynamics to an epsilon-stable profile.

    Each edge searches reassignments of its own tasks (jointly up to
    `exhaustive_cap` tasks, single-task moves beyond) and adopts the best
    found strategy iff it improves the shared utility by more than epsilon.
    Stops after a full quiet sweep or at the sweep limit.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    g = _game_of(slot)
    if init is None:
        assign = g.origin.copy()
    else:
        g.validate_profile(init)
        assign = g.to_array(init)
    u_cur = g.score(assign)
    utilities = [u_cur]
    trace = []
    moves = 0
    any_coordinate = False
    sweeps_done = 0
    for sweep in range(max_sweeps):
        moved_this_sweep = False
        for e in range(g.E):
            own = g.own_tasks[e]
            if own.size == 0:
                continue
            if own.size <= exhaustive_cap:
                candidates = _all_joint_candidates(g.E, own.size)
            else:
                any_coordinate = True
                candidates = _coordinate_candidates(assign[own], g.E)
            scores = g.score_block(own, candidates, assign)
            best = int(np.argmax(scores))
            u_best = float(scores[best])
            if u_best > u_cur + epsilon:
                assign = assign.copy()
                assign[own] = candidates[best]
                trace.append((sweep, e, True, u_cur, u_best))
                u_cur = u_best
                utilities.append(u_cur)
                moves += 1
                moved_this_sweep = True
            else:
                trace.append((sweep, e, False, u_cur, u_cur))
        sweeps_done = sweep + 1
        if not moved_this_sweep:
            kind = "coordinate_stationary" if any_coordinate else "epsilon_equilibrium"
            return g.to_profile(assign), BRCertificate(
                kind=kind,
                sweeps=sweeps_done,
                moves=moves,
                utilities=tuple(utilities),
                trace=tuple(trace),
            )
    return g.to_profile(assign), BRCertificate(
        kind="sweep_limit",
        sweeps=sweeps_done,
        moves=moves,
        utilities=tuple(utilities),
        trace=tuple(trace),
    )


def _all_joint_candidates(E: int, n: int) -> np.ndarray:
    grids = np.meshgrid(*([np.arange(E)] * n), indexing="ij")
    return np.stack(grids, axis=-1).reshape(-1, n)


def _coordinate_candidates(current: np.ndarray, E: int) -> np.ndarray:
    n = current.shape[0]
    cands = [current.copy()]
    for i in range(n):
        for e in range(E):
            if e == current[i]:
                continue
            c = current.copy()
            c[i] = e
            cands.append(c)
    return np.asarray(cands, dtype=int)


def brute_force_equilibria(slot, epsilon: float = DEFAULT_EPSILON) -> list[OffloadProfile]:
    """Enumerate every profile of a tiny instance and return the
    epsilon-stable ones (always nonempty: the maximizer qualifies).

    Utilities go through the reference allocation chain, independent of the
    incremental scorer used by the improvement dynamics.
    """
    g = _game_of(slot)
    if g.K > BRUTE_FORCE_MAX_TASKS or g.E > BRUTE_FORCE_MAX_EDGES:
        raise ValueError(
            f"instance too large for enumeration: {g.K} tasks, {g.E} edges "
            f"(bounds {BRUTE_FORCE_MAX_TASKS} tasks, {BRUTE_FORCE_MAX_EDGES} edges)"
        )
    if g.K == 0:
        return [OffloadProfile(assign={})]
    profiles = _all_joint_candidates(g.E, g.K)  # (E^K, K)
    values = np.asarray([utility(g.to_profile(a), g)[0] for a in profiles])
    powers_of_e = g.E ** np.arange(g.K)
    stable_mask = np.ones(len(profiles), dtype=bool)
    for e in range(g.E):
        own = g.own_tasks[e]
        if own.size == 0:
            continue
        own_weights = powers_of_e[own]
        base_codes = (profiles @ powers_of_e) - profiles[:, own] @ own_weights
        block_best = {}
        for c_base, val in zip(base_codes, values):
            cur = block_best.get(c_base)
            if cur is None or val > cur:
                block_best[c_base] = val
        best_arr = np.asarray([block_best[c] for c in base_codes])
        stable_mask &= values >= best_arr - epsilon
    return [g.to_profile(profiles[i]) for i in np.flatnonzero(stable_mask)]
