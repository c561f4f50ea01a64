"""Vehicle trajectories (trace ingestion or synthetic random waypoint) and
edge coverage/distance indexing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vecsim.config import EdgeNode, ScenarioConfig, VehicleState

# Default per-vehicle speed distribution for the synthetic generator,
# calibrated to morning-peak urban trace statistics (mean, variance in m/s).
SPEED_MEAN_MPS = 5.22
SPEED_VAR = 2.61


@dataclass(frozen=True)
class TrajectorySet:
    """Positions of all vehicles over the horizon.

    `positions` has shape (n_vehicles, slot_count, 2) with NaN rows where a
    vehicle is absent. `vehicle_ids[i]` is the external id of row i.
    """

    positions: np.ndarray
    vehicle_ids: np.ndarray
    slot_count: int

    @property
    def n_vehicles(self) -> int:
        return int(self.positions.shape[0])

    def present(self, row: int, slot: int) -> bool:
        if slot >= self.slot_count:
            return False
        return bool(np.isfinite(self.positions[row, slot, 0]))

    @property
    def vehicles(self) -> list[VehicleState]:
        out = []
        for i, vid in enumerate(self.vehicle_ids):
            per_slot = tuple(
                (float(x), float(y)) if np.isfinite(x) else None
                for x, y in self.positions[i]
            )
            out.append(VehicleState(id=int(vid), position=per_slot))
        return out


def empty_trajectories() -> TrajectorySet:
    return TrajectorySet(
        positions=np.zeros((0, 0, 2)), vehicle_ids=np.zeros(0, dtype=int), slot_count=0
    )


def load_trace(path, cfg: ScenarioConfig) -> TrajectorySet:
    """Load a trajectory CSV with header ``vehicle_id,slot,x_m,y_m``.

    Rows with coordinates outside the area or slots outside the horizon are
    rejected (not clipped). Vehicles may have gaps; they are absent there.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() and header.strip() != "vehicle_id,slot,x_m,y_m":
            raise ValueError(f"unexpected trace header: {header.strip()!r}")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                vid = int(parts[0])
                slot = int(parts[1])
                x = float(parts[2])
                y = float(parts[3])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: malformed row {line!r}") from exc
            if not (0.0 <= x <= cfg.area_side_m and 0.0 <= y <= cfg.area_side_m):
                raise ValueError(f"line {lineno}: coordinate out of area: ({x}, {y})")
            if slot < 0 or slot >= cfg.horizon_slots:
                raise ValueError(f"line {lineno}: slot {slot} outside horizon")
            rows.append((vid, slot, x, y))
    if not rows:
        return empty_trajectories()
    vids = sorted({r[0] for r in rows})
    slot_count = max(r[1] for r in rows) + 1
    index = {vid: i for i, vid in enumerate(vids)}
    positions = np.full((len(vids), slot_count, 2), np.nan)
    for vid, slot, x, y in rows:
        positions[index[vid], slot] = (x, y)
    return TrajectorySet(
        positions=positions, vehicle_ids=np.asarray(vids, dtype=int), slot_count=slot_count
    )


def synth_trace(
    cfg: ScenarioConfig,
    n_vehicles: int,
    seed: int,
    speed_mean: float = SPEED_MEAN_MPS,
    speed_var: float = SPEED_VAR,
) -> TrajectorySet:
    """Random-waypoint motion over the square area.

    Each vehicle keeps a constant speed drawn from Normal(speed_mean,
    speed_var) clamped positive, walks toward uniformly drawn waypoints, and
    is present for the whole horizon. Deterministic for a fixed seed.
    """
    if n_vehicles < 0:
        raise ValueError("n_vehicles must be >= 0")
    T = cfg.horizon_slots
    if n_vehicles == 0:
        return TrajectorySet(
            positions=np.zeros((0, T, 2)),
            vehicle_ids=np.zeros(0, dtype=int),
            slot_count=T,
        )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x30B1])))
    speeds = np.maximum(rng.normal(speed_mean, np.sqrt(speed_var), n_vehicles), 1e-3)
    pos = rng.uniform(0.0, cfg.area_side_m, size=(n_vehicles, 2))
    waypoints = rng.uniform(0.0, cfg.area_side_m, size=(n_vehicles, 2))
    positions = np.empty((n_vehicles, T, 2))
    for t in range(T):
        positions[:, t] = pos
        for v in range(n_vehicles):
            remaining = speeds[v] * cfg.slot_duration_s
            while remaining > 0.0:
                delta = waypoints[v] - pos[v]
                dist = float(np.hypot(delta[0], delta[1]))
                if dist <= remaining:
                    pos[v] = waypoints[v]
                    remaining -= dist
                    waypoints[v] = rng.uniform(0.0, cfg.area_side_m, size=2)
                else:
                    pos[v] = pos[v] + delta * (remaining / dist)
                    remaining = 0.0
    return TrajectorySet(
        positions=positions,
        vehicle_ids=np.arange(n_vehicles, dtype=int),
        slot_count=T,
    )


@dataclass(frozen=True)
class CoverageIndex:
    """Per-slot vehicle-to-edge distances and coverage membership.

    `dist` has shape (n_vehicles, slot_count, n_edges); absent vehicles have
    NaN distances. `covered[v, t, e]` is True iff dist <= comm range of e.
    `nearest[v, t]` is the closest covering edge (ties to the lower edge id),
    or -1 when the vehicle is uncovered or absent.
    """

    dist: np.ndarray
    covered: np.ndarray
    nearest: np.ndarray
    slot_count: int

    def vehicles_at(self, edge: int, slot: int) -> np.ndarray:
        """Row indices of vehicles covered by `edge` in `slot`, ascending."""
        return np.flatnonzero(self.covered[:, slot, edge])

    def distance(self, row: int, slot: int, edge: int) -> float:
        return float(self.dist[row, slot, edge])


def build_coverage(traj: TrajectorySet, edges: list[EdgeNode]) -> CoverageIndex:
    """Exact Euclidean distances and inclusive-boundary coverage sets."""
    n_e = len(edges)
    V, T = traj.n_vehicles, traj.slot_count
    if V == 0 or n_e == 0:
        return CoverageIndex(
            dist=np.full((V, T, n_e), np.nan),
            covered=np.zeros((V, T, n_e), dtype=bool),
            nearest=np.full((V, T), -1, dtype=int),
            slot_count=T,
        )
    locs = np.asarray([e.location for e in edges])  # (E, 2)
    ranges = np.asarray([e.comm_range_m for e in edges])  # (E,)
    delta = traj.positions[:, :, None, :] - locs[None, None, :, :]  # (V, T, E, 2)
    dist = np.sqrt((delta**2).sum(axis=-1))
    with np.errstate(invalid="ignore"):
        covered = dist <= ranges[None, None, :]
    covered &= np.isfinite(dist)
    # Nearest covering edge; np.argmin on masked distances, ties resolve to
    # the lower edge id because argmin returns the first minimum.
    masked = np.where(covered, dist, np.inf)
    nearest = np.argmin(masked, axis=2).astype(int)
    nearest[~covered.any(axis=2)] = -1
    return CoverageIndex(dist=dist, covered=covered, nearest=nearest, slot_count=T)
