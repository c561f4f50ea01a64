import dataclasses
import math

import numpy as np
import pytest

from vecsim.channel import (
    ChannelRealization,
    build_decode_order,
    realize_channel,
    sinr,
    upload_time,
    upload_time_bits,
)
from vecsim.config import EdgeNode, ScenarioConfig, TaskSpec
from vecsim.mobility import TrajectorySet, build_coverage


def edge(i, x, y):
    return EdgeNode(id=i, location=(x, y), cpu_hz=3e9, max_power_mw=1e3, comm_range_m=500.0)


def world(positions, edges, gains):
    """One-slot world with hand-set squared gains (V, E)."""
    pos = np.asarray(positions, dtype=float)[:, None, :]
    traj = TrajectorySet(
        positions=pos, vehicle_ids=np.arange(pos.shape[0]), slot_count=1
    )
    cov = build_coverage(traj, edges)
    ch = ChannelRealization(gain2=np.asarray(gains, dtype=float)[:, None, :], seed=0)
    return cov, ch, build_decode_order(cov, ch, 0)


def task(size_bits=8e6):
    return TaskSpec(
        id=0, vehicle=0, birth_slot=0, size_bits=size_bits,
        cycles_per_bit=500.0, deadline_s=10.0, origin_edge=0,
    )


class TestRealization:
    def test_gain_formula_and_determinism(self):
        cfg = dataclasses.replace(ScenarioConfig(), horizon_slots=1)
        pos = np.asarray([[100.0, 500.0]])[:, None, :]
        traj = TrajectorySet(positions=pos, vehicle_ids=np.arange(1), slot_count=1)
        cov = build_coverage(traj, [edge(0, 0.0, 500.0)])
        a = realize_channel(cov, cfg, 3)
        b = realize_channel(cov, cfg, 3)
        assert a.gain2[0, 0, 0] == b.gain2[0, 0, 0]
        fading = a.gain2[0, 0, 0] * 100.0**3
        assert fading > 0.0

    def test_fading_is_unit_mean_exponential(self):
        # many slots at a fixed 100 m distance: mean |h|^2 * dist^phi ~ 1
        cfg = dataclasses.replace(ScenarioConfig(), horizon_slots=4000)
        pos = np.tile([100.0, 500.0], (1, cfg.horizon_slots, 1))
        traj = TrajectorySet(positions=pos, vehicle_ids=np.arange(1), slot_count=cfg.horizon_slots)
        cov = build_coverage(traj, [edge(0, 0.0, 500.0)])
        ch = realize_channel(cov, cfg, 11)
        fading = ch.gain2[0, :, 0] * 1e6
        assert float(fading.mean()) == pytest.approx(1.0, abs=0.05)
        assert float(np.var(fading)) == pytest.approx(1.0, abs=0.15)

    def test_distance_floor_and_cutoff(self):
        cfg = dataclasses.replace(ScenarioConfig(), horizon_slots=1)
        pos = np.asarray([[0.0, 500.0], [2000.0, 500.0]])[:, None, :]
        traj = TrajectorySet(positions=pos, vehicle_ids=np.arange(2), slot_count=1)
        cov = build_coverage(traj, [edge(0, 0.0, 500.0)])
        ch = realize_channel(cov, cfg, 5)
        assert np.isfinite(ch.gain2[0, 0, 0]) and ch.gain2[0, 0, 0] > 0
        # 2000 m > 3 * 500 m: treated as zero interference
        assert ch.gain2[1, 0, 0] == 0.0


class TestSinr:
    def test_single_vehicle_no_interference(self):
        cov, ch, order = world([[100.0, 500.0]], [edge(0, 0.0, 500.0)], [[1e-10]])
        cfg = ScenarioConfig()
        val = sinr(0, 0, 0, {(0, 0): 100.0}, ch, order, cfg)
        assert val == pytest.approx(10.0, rel=1e-12)

    def test_worse_vehicle_intra_interference(self):
        # second vehicle has worse channel; its received power is 9e-9 mW
        cov, ch, order = world(
            [[100.0, 500.0], [200.0, 500.0]],
            [edge(0, 0.0, 500.0)],
            [[1e-10], [9e-11]],
        )
        cfg = ScenarioConfig()
        powers = {(0, 0): 100.0, (1, 0): 100.0}
        val = sinr(0, 0, 0, powers, ch, order, cfg)
        assert val == pytest.approx(1e-8 / (9e-9 + 1e-9), rel=1e-12)
        # the worse vehicle sees no intra interference (better one is cancelled)
        val_worse = sinr(1, 0, 0, powers, ch, order, cfg)
        assert val_worse == pytest.approx(9e-9 / 1e-9, rel=1e-12)

    def test_zero_power_zero_sinr(self):
        cov, ch, order = world([[100.0, 500.0]], [edge(0, 0.0, 500.0)], [[1e-10]])
        assert sinr(0, 0, 0, {(0, 0): 0.0}, ch, order, ScenarioConfig()) == 0.0

    def test_inter_edge_interference(self):
        edges = [edge(0, 0.0, 500.0), edge(1, 900.0, 500.0)]
        cov, ch, order = world(
            [[100.0, 500.0], [800.0, 500.0]],
            edges,
            [[1e-10, 2e-11], [3e-11, 1e-10]],
        )
        cfg = ScenarioConfig()
        powers = {(0, 0): 100.0, (1, 1): 50.0}
        val = sinr(0, 0, 0, powers, ch, order, cfg)
        expected = 1e-10 * 100.0 / (3e-11 * 50.0 + cfg.noise_mw)
        assert val == pytest.approx(expected, rel=1e-12)

    def test_sic_asymmetry_literal_rule(self):
        # v' contributes to v's intra interference iff gain2(v') < gain2(v)
        edges = [edge(0, 0.0, 500.0)]
        cov, ch, order = world(
            [[100.0, 500.0], [200.0, 500.0]], edges, [[2e-10], [1e-10]]
        )
        cfg = ScenarioConfig()
        base = {(0, 0): 10.0, (1, 0): 10.0}
        # direction 1: worse vehicle's power hurts the better vehicle
        more = dict(base)
        more[(1, 0)] = 20.0
        assert sinr(0, 0, 0, more, ch, order, cfg) < sinr(0, 0, 0, base, ch, order, cfg)
        # direction 2: better vehicle's power does not affect the worse one
        more2 = dict(base)
        more2[(0, 0)] = 20.0
        assert sinr(1, 0, 0, more2, ch, order, cfg) == sinr(1, 0, 0, base, ch, order, cfg)

    def test_own_power_monotonicity(self):
        edges = [edge(0, 0.0, 500.0)]
        cov, ch, order = world(
            [[100.0, 500.0], [200.0, 500.0]], edges, [[2e-10], [1e-10]]
        )
        cfg = ScenarioConfig()
        vals = []
        for p in (5.0, 10.0, 20.0, 40.0):
            powers = {(0, 0): 10.0, (1, 0): p}
            vals.append(sinr(1, 0, 0, powers, ch, order, cfg))
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_equal_powers_noise_dominated_best_channel_highest_sinr(self):
        # under successive cancellation the last-decoded (worst) vehicle sees
        # no intra interference, so gain order only dictates SINR order once
        # noise dominates the residual interference
        edges = [edge(0, 0.0, 500.0)]
        cov, ch, order = world(
            [[100.0, 500.0], [150.0, 500.0], [200.0, 500.0]],
            edges,
            [[3e-10], [2e-10], [1e-10]],
        )
        cfg = ScenarioConfig()
        powers = {(0, 0): 1e-3, (1, 0): 1e-3, (2, 0): 1e-3}
        vals = [sinr(v, 0, 0, powers, ch, order, cfg) for v in range(3)]
        assert vals[0] == max(vals)
        assert vals[0] > vals[1] > vals[2]

    def test_worst_vehicle_decoded_last_sees_no_intra_interference(self):
        edges = [edge(0, 0.0, 500.0)]
        cov, ch, order = world(
            [[100.0, 500.0], [150.0, 500.0], [200.0, 500.0]],
            edges,
            [[3e-10], [2e-10], [1e-10]],
        )
        cfg = ScenarioConfig()
        powers = {(0, 0): 10.0, (1, 0): 10.0, (2, 0): 10.0}
        worst = sinr(2, 0, 0, powers, ch, order, cfg)
        assert worst == pytest.approx(1e-10 * 10.0 / cfg.noise_mw, rel=1e-12)

    def test_gain_tie_broken_by_vehicle_id(self):
        cov, ch, order = world(
            [[100.0, 500.0], [100.0, 400.0]], [edge(0, 0.0, 500.0)], [[1e-10], [1e-10]]
        )
        assert order.order[0] == [0, 1]
        assert order.worse_set(0, 0) == [1]
        assert order.better_set(1, 0) == [0]


class TestUploadTime:
    def test_unit_log(self):
        cfg = ScenarioConfig()
        assert upload_time(task(8e6), 1.0, cfg) == pytest.approx(0.4, rel=1e-12)

    def test_derived_log2_11(self):
        cfg = ScenarioConfig()
        expected = 8e6 / (20e6 * math.log2(11.0))
        assert expected == pytest.approx(0.11562, abs=1e-5)
        assert upload_time(task(8e6), 10.0, cfg) == pytest.approx(expected, rel=1e-12)

    def test_zero_sinr_unservable(self):
        assert upload_time(task(), 0.0, ScenarioConfig()) == math.inf

    def test_strictly_decreasing_in_sinr(self):
        cfg = ScenarioConfig()
        times = [upload_time_bits(8e6, s, cfg) for s in (0.5, 1.0, 2.0, 5.0, 50.0)]
        assert all(b < a for a, b in zip(times, times[1:]))

    def test_negative_sinr_rejected(self):
        with pytest.raises(ValueError):
            upload_time(task(), -0.1, ScenarioConfig())
