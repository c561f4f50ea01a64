"""Uplink channel model: Rayleigh block fading over path loss, successive
decoding order, SINR with intra- and inter-edge interference, upload time.

Power gains are |h|^2 = X / dist^phi with X ~ Exp(1) drawn i.i.d. per
(vehicle, edge, slot); a squared Rayleigh (unit complex normal) envelope is
exponential. Gains are realized for every pair within 3x the edge range and
treated as zero interference beyond that cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vecsim.config import ScenarioConfig, TaskSpec
from vecsim.mobility import CoverageIndex

# Minimum propagation distance; avoids a singular path-loss at dist -> 0.
DIST_FLOOR_M = 1.0

# Interference realized out to this multiple of the communication range.
INTERFERENCE_RANGE_FACTOR = 3.0


@dataclass(frozen=True)
class ChannelRealization:
    """Squared channel gains per (vehicle row, slot, edge); zero beyond the
    interference cutoff, NaN-free."""

    gain2: np.ndarray  # (V, T, E)
    seed: int

    def at(self, row: int, slot: int, edge: int) -> float:
        return float(self.gain2[row, slot, edge])


def realize_channel(cov: CoverageIndex, cfg: ScenarioConfig, seed: int) -> ChannelRealization:
    V, T, E = cov.dist.shape
    gain2 = np.zeros((V, T, E))
    cutoff = INTERFERENCE_RANGE_FACTOR * cfg.comm_range_m
    for t in range(T):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xC4A7, t])))
        fading2 = rng.exponential(1.0, size=(V, E))
        d = np.maximum(cov.dist[:, t, :], DIST_FLOOR_M)
        with np.errstate(invalid="ignore"):
            g = fading2 / d**cfg.path_loss_exp
            mask = np.isfinite(cov.dist[:, t, :]) & (cov.dist[:, t, :] <= cutoff)
        gain2[:, t, :] = np.where(mask, g, 0.0)
    return ChannelRealization(gain2=gain2, seed=seed)


@dataclass(frozen=True)
class DecodeOrder:
    """Successive decoding order for one slot.

    `order[e]` lists covered vehicle rows best channel first; equal gains are
    broken by vehicle row (lower row decodes earlier, i.e. is treated as the
    better channel) so the order is a strict total order.
    """

    slot: int
    order: dict[int, list[int]]
    rank: dict[int, dict[int, int]]  # edge -> row -> position in order

    def worse_set(self, row: int, edge: int) -> list[int]:
        """Covered vehicles decoded after `row` at `edge` (its interferers)."""
        r = self.rank[edge][row]
        return self.order[edge][r + 1 :]

    def better_set(self, row: int, edge: int) -> list[int]:
        """Covered vehicles decoded before `row` at `edge` (it interferes with them)."""
        r = self.rank[edge][row]
        return self.order[edge][:r]


def build_decode_order(cov: CoverageIndex, ch: ChannelRealization, slot: int) -> DecodeOrder:
    E = cov.dist.shape[2]
    order: dict[int, list[int]] = {}
    rank: dict[int, dict[int, int]] = {}
    for e in range(E):
        rows = cov.vehicles_at(e, slot)
        srt = sorted(rows, key=lambda r: (-ch.gain2[r, slot, e], r))
        order[e] = [int(r) for r in srt]
        rank[e] = {int(r): i for i, r in enumerate(srt)}
    return DecodeOrder(slot=slot, order=order, rank=rank)


def sinr(
    row: int,
    edge: int,
    slot: int,
    powers: dict[tuple[int, int], float],
    ch: ChannelRealization,
    order: DecodeOrder,
    cfg: ScenarioConfig,
) -> float:
    """SINR of `row`'s uplink at `edge` under the full power assignment.

    `powers` maps (vehicle row, serving edge) to transmit power in mW; pairs
    not present transmit nothing. Same-edge vehicles with a better channel
    are cancelled; worse ones interfere, as do all uplinks of other edges.
    """
    g = ch.gain2[:, slot, :]
    num = g[row, edge] * powers.get((row, edge), 0.0)
    intra = 0.0
    for other in order.worse_set(row, edge):
        intra += g[other, edge] * powers.get((other, edge), 0.0)
    inter = 0.0
    for (vrow, e2), p in powers.items():
        if e2 != edge:
            inter += g[vrow, edge] * p
    return num / (intra + inter + cfg.noise_mw)


def upload_time(task: TaskSpec, sinr_val: float, cfg: ScenarioConfig) -> float:
    """Seconds to push the task payload through the shared band; infinite
    when the link carries no rate."""
    return upload_time_bits(task.size_bits, sinr_val, cfg)


def upload_time_bits(size_bits: float, sinr_val: float, cfg: ScenarioConfig) -> float:
    if sinr_val < 0:
        raise ValueError("SINR must be nonnegative")
    if sinr_val == 0.0:
        return math.inf
    return size_bits / (cfg.bandwidth_hz * math.log2(1.0 + sinr_val))
