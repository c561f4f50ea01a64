"""Uplink transmission power allocation.

Per slot, each edge splits its power budget across the vehicles uploading to
it. The sum-rate objective is nonconcave because of interference, so the
solver iterates a concave lower bound: freeze a reference SINR, tighten the
bound there (coefficients xi/omega), and solve the relaxed problem in
log-power variables by Lagrange dual gradient steps with a fixed-point primal
update. Edges are coupled through inter-edge interference and iterate Jacobi
style against the latest global iterate.

A round is accepted only if it does not decrease the relaxed objective at its
own reference point, which makes the true sum-rate non-decreasing across
rounds (the bound is tight at the reference and global below the true rate).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vecsim.channel import ChannelRealization, DecodeOrder
from vecsim.config import ScenarioConfig

_DUAL_DAMPING = 0.9


@dataclass(frozen=True)
class PowerSolverParams:
    sca_rounds: int = 10
    dual_iters: int = 50
    dual_step: float = 1e-3  # raw gradient step per mW of budget violation
    p_min_mw: float = 1e-6
    tol_obj: float = 1e-6
    tol_feas: float = 1e-6  # mW
    adaptive_step: bool = True  # scale dual steps to the running multiplier
    collect_trace: bool = False


@dataclass
class UplinkProblem:
    """One slot's uplinks: uploader k transmits to edge origin[k].

    gain2[k, e] is uploader k's squared channel gain toward edge e (zero
    beyond the interference cutoff). Uploaders are ordered by task id, which
    follows vehicle row order within a slot.
    """

    origin: np.ndarray  # (K,) int
    gain2: np.ndarray  # (K, E)
    vid: np.ndarray  # (K,) vehicle rows, for decode-order tie breaks
    edge_power_mw: np.ndarray  # (E,)
    noise_mw: float
    bandwidth_hz: float

    def __post_init__(self):
        self.K = int(self.origin.shape[0])
        self.E = int(self.gain2.shape[1]) if self.gain2.ndim == 2 else int(self.edge_power_mw.shape[0])
        # Decode order per edge over its own uploaders: best gain first,
        # ties to the lower vehicle row.
        self.edge_members: list[np.ndarray] = []
        for e in range(self.E):
            members = np.flatnonzero(self.origin == e)
            key = sorted(members, key=lambda k: (-self.gain2[k, e], self.vid[k]))
            self.edge_members.append(np.asarray(key, dtype=int))
        # Flat decode-order layout so per-sweep work is whole-array numpy:
        # uploaders concatenated per edge, decode order within each segment.
        if self.K:
            self.flat = np.concatenate([m for m in self.edge_members if m.size]).astype(int)
        else:
            self.flat = np.zeros(0, dtype=int)
        self.flat_edge = self.origin[self.flat]
        counts = np.asarray([m.size for m in self.edge_members], dtype=int)
        self.member_counts = counts
        self.flat_counts = counts[counts > 0]
        self.gain_own_flat = (
            self.gain2[self.flat, self.flat_edge] if self.K else np.zeros(0)
        )
        self.budget_flat = self.edge_power_mw[self.flat_edge]

    def _segment_cumsum(self, values: np.ndarray) -> np.ndarray:
        """Inclusive cumulative sum restarting at each edge segment."""
        c = np.cumsum(values)
        if not len(self.flat_counts):
            return c
        starts = np.concatenate([[0], np.cumsum(self.flat_counts)[:-1]])
        base = np.repeat(c[starts] - values[starts], self.flat_counts)
        return c - base

    def equal_split(self) -> np.ndarray:
        p = np.zeros(self.K)
        if self.K:
            p[self.flat] = self.budget_flat / self.member_counts[self.flat_edge]
        return p

    def interference(self, p: np.ndarray) -> np.ndarray:
        """Interference-plus-noise at each uploader's serving edge."""
        if not self.K:
            return np.zeros(0)
        tot = p @ self.gain2  # (E,) total received power at each edge
        rec_own = self.gain_own_flat * p[self.flat]
        same_tot = np.bincount(self.flat_edge, weights=rec_own, minlength=self.E)
        inter = tot[self.flat_edge] - same_tot[self.flat_edge]
        # later-decoded (worse) uploaders still interfere: suffix-exclusive sum
        incl = self._segment_cumsum(rec_own)
        intra = same_tot[self.flat_edge] - incl
        denom = np.empty(self.K)
        denom[self.flat] = intra + inter + self.noise_mw
        return denom

    def sinr(self, p: np.ndarray) -> np.ndarray:
        denom = self.interference(p)
        sig = self.gain2[np.arange(self.K), self.origin] * p
        return sig / denom

    def sum_rate(self, p: np.ndarray) -> float:
        """True aggregate uplink rate in bits/s."""
        return float(self.bandwidth_hz * np.log2(1.0 + self.sinr(p)).sum())

    def edge_sums(self, p: np.ndarray) -> np.ndarray:
        sums = np.zeros(self.E)
        np.add.at(sums, self.origin, p)
        return sums


def sca_coefficients(sinr_bar):
    """Tight lower-bound coefficients at the reference SINR:
    xi*log2(z) + omega <= log2(1+z) for all z > 0, equality at z = sinr_bar."""
    s = np.asarray(sinr_bar, dtype=float)
    if np.any(s <= 0):
        raise ValueError("reference SINR must be positive")
    xi = s / (1.0 + s)
    omega = np.log2(1.0 + s) - xi * np.log2(s)
    return xi, omega


def dual_update(lam: float, powers_sum: float, p_e: float, sigma: float) -> float:
    """Projected gradient step on the edge's power-budget multiplier."""
    return max(0.0, lam + sigma * (powers_sum - p_e))


def relaxed_objective(problem: UplinkProblem, p: np.ndarray, xi: np.ndarray, omega: np.ndarray) -> float:
    """Lower-bound objective b*(xi*log2(SINR) + omega), in bits/s."""
    s = problem.sinr(p)
    with np.errstate(divide="ignore"):
        terms = xi * np.log2(s) + omega
    return float(problem.bandwidth_hz * terms.sum())


def fixed_point_power(
    row: int,
    edge: int,
    slot: int,
    lam: float,
    xi: dict[int, float],
    powers: dict[tuple[int, int], float],
    ch: ChannelRealization,
    order: DecodeOrder,
    cfg: ScenarioConfig,
    p_min_mw: float = 1e-6,
) -> float:
    """One stationarity update of a single uplink's power.

    The multiplier price is raised by the marginal damage this uplink causes
    to same-edge vehicles decoded before it (their interference still
    contains this signal); vehicles decoded after it are already clean of it.
    Result is clamped to [p_min, edge budget].
    """
    b = cfg.bandwidth_hz
    g = ch.gain2[:, slot, :]
    price = lam
    for w in order.better_set(row, edge):
        xw = xi.get(w, 0.0)
        if xw == 0.0 or (w, edge) not in powers:
            continue  # only vehicles uplinking to this edge carry rate terms here
        iw = _interference_at(w, edge, slot, powers, ch, order, cfg)
        price += b * xw * g[row, edge] / iw
    if price <= 0.0:
        return cfg.max_power_mw
    return float(min(max(b * xi.get(row, 0.0) / price, p_min_mw), cfg.max_power_mw))


def _interference_at(row, edge, slot, powers, ch, order, cfg) -> float:
    g = ch.gain2[:, slot, :]
    intra = sum(g[w, edge] * powers.get((w, edge), 0.0) for w in order.worse_set(row, edge))
    inter = sum(g[v, edge] * p for (v, e2), p in powers.items() if e2 != edge)
    return intra + inter + cfg.noise_mw


@dataclass
class PowerAssignment:
    """Solved per-uplink powers for one slot plus solver diagnostics."""

    power_mw: np.ndarray  # (K,) per uploader
    lam: np.ndarray  # (E,)
    lb_objective: float  # bits/s, relaxed objective at the returned powers
    sum_rate: float  # bits/s, true rate at the returned powers
    sinr: np.ndarray  # (K,)
    cs_residual: np.ndarray  # (E,) |lam*(sum_p - p_e)| / max(1, lb_e)
    converged: np.ndarray  # (E,) bool
    rounds_used: int
    trace: list = field(default_factory=list)  # (round, edge, lam, sum_p, lb)

    def as_dict(self, problem: UplinkProblem) -> dict[tuple[int, int], float]:
        return {
            (int(problem.vid[k]), int(problem.origin[k])): float(self.power_mw[k])
            for k in range(problem.K)
        }


def _fixed_point_sweep(
    problem: UplinkProblem,
    p: np.ndarray,
    lam: np.ndarray,
    xi: np.ndarray,
    p_min: float,
) -> np.ndarray:
    """Jacobi update of every uplink from the current global iterate."""
    b = problem.bandwidth_hz
    denom = problem.interference(p)
    flat = problem.flat
    # influence of earlier-decoded same-edge uploaders: prefix-exclusive sums
    terms = b * xi[flat] / denom[flat]
    prefix = problem._segment_cumsum(terms) - terms
    price = lam[problem.flat_edge] + problem.gain_own_flat * prefix
    with np.errstate(divide="ignore"):
        raw = b * xi[flat] / price
    raw[price <= 0.0] = problem.budget_flat[price <= 0.0]
    p_new = np.empty_like(p)
    p_new[flat] = np.clip(raw, p_min, problem.budget_flat)
    return p_new


def solve_uplink_power(problem: UplinkProblem, params: PowerSolverParams | None = None) -> PowerAssignment:
    """Run the full relaxation loop on one slot's uplinks."""
    params = params or PowerSolverParams()
    K, E = problem.K, problem.E
    if K == 0:
        return PowerAssignment(
            power_mw=np.zeros(0),
            lam=np.zeros(E),
            lb_objective=0.0,
            sum_rate=0.0,
            sinr=np.zeros(0),
            cs_residual=np.zeros(E),
            converged=np.ones(E, dtype=bool),
            rounds_used=0,
        )
    b = problem.bandwidth_hz
    p_e = problem.edge_power_mw
    members_count = np.asarray([m.size for m in problem.edge_members], dtype=float)
    lam_boot = np.where(members_count > 0, b * np.maximum(members_count, 1.0) / p_e, 0.0)

    p = problem.equal_split()
    lam = lam_boot.copy()
    xi, omega = sca_coefficients(problem.sinr(p))
    trace: list = []
    rounds_used = 0
    for rnd in range(params.sca_rounds):
        sinr_ref = problem.sinr(p)
        xi, omega = sca_coefficients(sinr_ref)
        lb_ref = relaxed_objective(problem, p, xi, omega)
        p_trial = p.copy()
        for _ in range(params.dual_iters):
            p_next = _fixed_point_sweep(problem, p_trial, lam, xi, params.p_min_mw)
            sums = problem.edge_sums(p_next)
            for e in range(E):
                if members_count[e] == 0:
                    continue
                if params.adaptive_step:
                    sigma = _DUAL_DAMPING * max(lam[e], 0.05 * lam_boot[e]) / max(sums[e], 1e-12)
                else:
                    sigma = params.dual_step
                lam[e] = dual_update(lam[e], sums[e], p_e[e], sigma)
            moved = float(np.max(np.abs(p_next - p_trial))) if K else 0.0
            p_trial = p_next
            feas = np.all(sums <= p_e + params.tol_feas)
            if moved <= 1e-8 * float(p_e.max()) and feas:
                break
        lb_trial = relaxed_objective(problem, p_trial, xi, omega)
        if params.collect_trace:
            sums = problem.edge_sums(p_trial)
            for e in range(E):
                trace.append((rnd, e, float(lam[e]), float(sums[e]), lb_trial))
        rounds_used = rnd + 1
        if lb_trial >= lb_ref - abs(lb_ref) * params.tol_obj:
            p = p_trial
            if lb_trial - lb_ref <= params.tol_obj * max(1.0, abs(lb_ref)):
                break  # plateau: further rounds would re-freeze the same point
        else:
            break  # bound solve regressed; keep the reference point and stop

    p = _project_feasible(problem, p, params.p_min_mw)
    sums = problem.edge_sums(p)
    lb = relaxed_objective(problem, p, xi, omega)
    rate = problem.sum_rate(p)
    slack = sums - p_e
    lb_scale = max(1.0, abs(lb))
    cs = np.abs(lam * slack) / lb_scale
    converged = (np.abs(slack) <= params.tol_feas) | (lam <= 1e-12)
    converged |= members_count == 0
    return PowerAssignment(
        power_mw=p,
        lam=lam,
        lb_objective=lb,
        sum_rate=rate,
        sinr=problem.sinr(p),
        cs_residual=cs,
        converged=converged,
        rounds_used=rounds_used,
        trace=trace,
    )


def write_power_trace_csv(path, trace: list) -> None:
    """Solver trace rows (round, edge, lambda, sum power, bound value)."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# vecsim-power-trace-v1\n")
        writer = csv.writer(fh)
        writer.writerow(["round", "edge", "lambda", "sum_power_mw", "lb_objective"])
        for rnd, edge, lam, sum_p, lb in trace:
            writer.writerow([rnd, edge, repr(float(lam)), repr(float(sum_p)), repr(float(lb))])


def read_power_trace_csv(path) -> list:
    import csv

    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header.startswith("# vecsim-power-trace-v1"):
            raise ValueError(f"unknown power trace schema: {header!r}")
        for row in csv.DictReader(fh):
            rows.append(
                (
                    int(row["round"]),
                    int(row["edge"]),
                    float(row["lambda"]),
                    float(row["sum_power_mw"]),
                    float(row["lb_objective"]),
                )
            )
    return rows


def _project_feasible(problem: UplinkProblem, p: np.ndarray, p_min: float) -> np.ndarray:
    """Exact projection onto the budget simplex, keeping every uplink at or
    above the power floor (floor headroom is a config precondition)."""
    p = p.copy()
    for e in range(problem.E):
        members = problem.edge_members[e]
        if not members.size:
            continue
        budget = problem.edge_power_mw[e]
        total = p[members].sum()
        if total <= budget:
            continue
        floor_total = p_min * members.size
        if floor_total >= budget:
            p[members] = budget / members.size  # degenerate: split evenly
            continue
        excess = p[members] - p_min
        p[members] = p_min + excess * (budget - floor_total) / (total - floor_total)
    return p
