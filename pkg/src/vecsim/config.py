"""Scenario configuration, core value types, and unit helpers.

Unit discipline: every stored quantity uses the base unit of its field name
(bits, Hz, mW, m, s). Conversions (dBm, MB, GHz, ...) happen only at I/O
boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

# Decimal megabyte: 1e6 bytes = 8e6 bits.
MB_BITS = 8.0e6


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class ScenarioConfig:
    """World parameters for one simulation scenario.

    Defaults describe a 3x3 km square served by nine edge nodes on a uniform
    grid, 20 MHz shared uplink band, 1 W power budget per edge, and tasks of
    0.01..5 MB with 5..10 s deadlines.
    """

    num_edges: int = 9
    edge_grid: str = "auto"  # "auto" or "RxC" explicit grid
    area_side_m: float = 3000.0
    slot_duration_s: float = 1.0
    horizon_slots: int = 300
    bandwidth_hz: float = 20.0e6
    max_power_mw: float = 1.0e3
    cpu_range_hz: tuple[float, float] = (3.0e9, 10.0e9)
    comm_range_m: float = 500.0
    wired_rate_bps: float = 50.0e6
    distance_discount_per_m: float = 6.667e-4
    noise_mw: float = dbm_to_mw(-90.0)  # 1e-9 mW
    path_loss_exp: float = 3.0
    task_size_bits_range: tuple[float, float] = (0.01 * MB_BITS, 5.0 * MB_BITS)
    cycles_per_bit: float = 500.0
    deadline_s_range: tuple[float, float] = (5.0, 10.0)
    arrival_prob: float = 0.5
    rng_seed: int = 0


_RANGE_FIELDS = ("cpu_range_hz", "task_size_bits_range", "deadline_s_range")
_POSITIVE_FIELDS = (
    "num_edges",
    "area_side_m",
    "slot_duration_s",
    "horizon_slots",
    "bandwidth_hz",
    "max_power_mw",
    "comm_range_m",
    "wired_rate_bps",
    "distance_discount_per_m",
    "noise_mw",
    "path_loss_exp",
    "cycles_per_bit",
)


def validate_config(cfg: ScenarioConfig) -> list[str]:
    """Return a list of violated invariants, empty iff the config is valid."""
    errors = []
    for name in _POSITIVE_FIELDS:
        value = getattr(cfg, name)
        if not value > 0:
            errors.append(f"{name} must be strictly positive, got {value!r}")
    for name in _RANGE_FIELDS:
        low, high = getattr(cfg, name)
        if not (low > 0 and high > 0):
            errors.append(f"{name} bounds must be strictly positive, got {(low, high)!r}")
        elif low > high:
            errors.append(f"{name} range inverted: low {low!r} > high {high!r}")
    if not 0.0 <= cfg.arrival_prob <= 1.0:
        errors.append(f"arrival_prob out of [0,1]: {cfg.arrival_prob!r}")
    if not 0 <= cfg.rng_seed < 2**64:
        errors.append(f"rng_seed must fit in 64 bits, got {cfg.rng_seed!r}")
    try:
        grid_shape(cfg)
    except ValueError as exc:
        errors.append(str(exc))
    return errors


def require_valid(cfg: ScenarioConfig) -> ScenarioConfig:
    errors = validate_config(cfg)
    if errors:
        raise ValueError("invalid scenario config: " + "; ".join(errors))
    return cfg


def grid_shape(cfg: ScenarioConfig) -> tuple[int, int]:
    """Grid rows/cols used for edge placement."""
    if cfg.edge_grid == "auto":
        side = math.isqrt(max(cfg.num_edges, 1))
        if side * side < cfg.num_edges:
            side += 1
        return side, side
    try:
        rows_s, cols_s = cfg.edge_grid.lower().split("x")
        rows, cols = int(rows_s), int(cols_s)
    except Exception as exc:
        raise ValueError(f"edge_grid must be 'auto' or 'RxC', got {cfg.edge_grid!r}") from exc
    if rows * cols < cfg.num_edges:
        raise ValueError(f"edge_grid {cfg.edge_grid!r} too small for {cfg.num_edges} edges")
    return rows, cols


@dataclass(frozen=True)
class EdgeNode:
    """A roadside computing node: position, CPU frequency, uplink budget, range."""

    id: int
    location: tuple[float, float]
    cpu_hz: float
    max_power_mw: float
    comm_range_m: float


@dataclass(frozen=True)
class TaskSpec:
    """One computation task: payload size, per-bit CPU cycles, and deadline."""

    id: int
    vehicle: int
    birth_slot: int
    size_bits: float
    cycles_per_bit: float
    deadline_s: float
    origin_edge: int

    @property
    def cycles(self) -> float:
        return self.size_bits * self.cycles_per_bit


@dataclass(frozen=True)
class VehicleState:
    """Per-slot positions of one vehicle; None marks slots where it is absent."""

    id: int
    position: tuple  # tuple of (x, y) or None per slot


def edge_positions(cfg: ScenarioConfig) -> np.ndarray:
    """Cell centers of the placement grid, row-major, shape (num_edges, 2)."""
    rows, cols = grid_shape(cfg)
    xs = (np.arange(cols) + 0.5) * (cfg.area_side_m / cols)
    ys = (np.arange(rows) + 0.5) * (cfg.area_side_m / rows)
    grid = [(x, y) for y in ys for x in xs]
    return np.asarray(grid[: cfg.num_edges], dtype=float)


def build_edges(cfg: ScenarioConfig, seed: int) -> list[EdgeNode]:
    """Instantiate edge nodes on the grid with CPU frequencies sampled
    uniformly from cpu_range_hz (deterministic per seed)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xED9E])))
    low, high = cfg.cpu_range_hz
    cpus = rng.uniform(low, high, size=cfg.num_edges)
    positions = edge_positions(cfg)
    return [
        EdgeNode(
            id=e,
            location=(float(positions[e, 0]), float(positions[e, 1])),
            cpu_hz=float(cpus[e]),
            max_power_mw=cfg.max_power_mw,
            comm_range_m=cfg.comm_range_m,
        )
        for e in range(cfg.num_edges)
    ]


_INT_FIELDS = {"num_edges", "horizon_slots", "rng_seed"}


def parse_config_text(text: str) -> ScenarioConfig:
    """Parse a flat key/value scenario document.

    One `key = value` pair per line; `#` starts a comment; range fields take
    two comma-separated numbers. Unknown keys are rejected.
    """
    known = {f.name: f for f in fields(ScenarioConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in _RANGE_FIELDS:
            parts = [p.strip() for p in val.split(",")]
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: {key} needs 'low, high'")
            values[key] = (float(parts[0]), float(parts[1]))
        elif key in _INT_FIELDS:
            values[key] = int(float(val))
        elif key == "edge_grid":
            values[key] = val
        else:
            values[key] = float(val)
    return ScenarioConfig(**values)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = parse_config_text(fh.read())
    return require_valid(cfg)
