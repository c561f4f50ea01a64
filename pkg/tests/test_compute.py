import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vecsim.compute import ComputeAssignment, edge_distance, kkt_allocate, processing_time, wired_time
from vecsim.config import EdgeNode, ScenarioConfig, TaskSpec


def mk_task(tid, cycles, size_bits=None, origin=0):
    size = size_bits if size_bits is not None else cycles / 500.0
    return TaskSpec(
        id=tid, vehicle=tid, birth_slot=0, size_bits=size,
        cycles_per_bit=cycles / size, deadline_s=10.0, origin_edge=origin,
    )


def mk_edge(i, x=0.0, y=0.0):
    return EdgeNode(id=i, location=(x, y), cpu_hz=3e9, max_power_mw=1e3, comm_range_m=500.0)


class TestKktAllocate:
    def test_single_task_gets_everything(self):
        shares = kkt_allocate([mk_task(0, 4e9)], 3e9)
        assert shares[0] == pytest.approx(3e9)

    def test_sqrt_ratio_split(self):
        tasks = [mk_task(0, 4e9), mk_task(1, 1e9)]
        shares = kkt_allocate(tasks, 3e9)
        assert shares[0] == pytest.approx(2e9, rel=1e-12)
        assert shares[1] == pytest.approx(1e9, rel=1e-12)
        assert tasks[0].cycles / shares[0] == pytest.approx(2.0, rel=1e-12)
        assert tasks[1].cycles / shares[1] == pytest.approx(1.0, rel=1e-12)

    def test_identical_tasks_equal_split(self):
        tasks = [mk_task(i, 2e9) for i in range(5)]
        shares = kkt_allocate(tasks, 3e9)
        for s in shares.values():
            assert s == pytest.approx(3e9 / 5, rel=1e-12)

    def test_empty_task_list(self):
        assert kkt_allocate([], 3e9) == {}

    def test_budget_tight(self):
        tasks = [mk_task(i, c) for i, c in enumerate((1e9, 3e9, 7e9, 2.5e8))]
        shares = kkt_allocate(tasks, 5e9)
        assert sum(shares.values()) == pytest.approx(5e9, rel=1e-9)
        assert all(s > 0 for s in shares.values())

    @given(st.floats(min_value=0.1, max_value=100.0))
    def test_scale_equivariance(self, alpha):
        tasks = [mk_task(i, c) for i, c in enumerate((1e9, 4e9, 2e9))]
        scaled = [mk_task(i, alpha * c) for i, c in enumerate((1e9, 4e9, 2e9))]
        base = kkt_allocate(tasks, 6e9)
        after = kkt_allocate(scaled, 6e9)
        for i in range(3):
            assert after[i] == pytest.approx(base[i], rel=1e-9)

    def test_beats_random_allocations(self):
        rng = np.random.default_rng(0)
        tasks = [mk_task(i, c) for i, c in enumerate(rng.uniform(1e8, 1e10, size=6))]
        cycles = np.asarray([t.cycles for t in tasks])
        shares = kkt_allocate(tasks, 4e9)
        mine = sum(cycles[i] / shares[i] for i in range(6))
        draws = rng.dirichlet(np.ones(6), size=2000) * 4e9
        objs = (cycles / draws).sum(axis=1)
        assert np.all(mine <= objs + 1e-9 * mine)


class TestWiredTime:
    def test_local_is_zero(self):
        cfg = ScenarioConfig()
        e0 = mk_edge(0)
        assert wired_time(mk_task(0, 4e9), e0, e0, cfg) == 0.0

    def test_derived_value(self):
        cfg = ScenarioConfig()
        t = mk_task(0, 4e9, size_bits=8e6)
        val = wired_time(t, mk_edge(0, 0.0, 0.0), mk_edge(1, 1000.0, 0.0), cfg)
        assert val == pytest.approx(8e6 * 1000.0 * 6.667e-4 / 5e7, rel=1e-12)
        assert val == pytest.approx(0.10667, abs=5e-5)

    def test_colocated_edges_zero(self):
        cfg = ScenarioConfig()
        assert wired_time(mk_task(0, 4e9), mk_edge(0), mk_edge(1), cfg) == 0.0


class TestProcessingTime:
    def test_local_division(self):
        cfg = ScenarioConfig()
        edges = [mk_edge(0)]
        t = mk_task(0, 4e9)
        asg = ComputeAssignment(c={(0, 0): 2e9})
        assert processing_time(t, edges[0], asg, cfg, edges) == pytest.approx(2.0)

    def test_migration_adds_wired_time(self):
        cfg = ScenarioConfig()
        edges = [mk_edge(0, 0.0, 0.0), mk_edge(1, 1000.0, 0.0)]
        t = mk_task(0, 4e9, size_bits=8e6, origin=0)
        asg = ComputeAssignment(c={(0, 1): 2e9})
        expected = wired_time(t, edges[0], edges[1], cfg) + 4e9 / 2e9
        assert processing_time(t, edges[1], asg, cfg, edges) == pytest.approx(expected, rel=1e-12)

    def test_missing_allocation_errors(self):
        cfg = ScenarioConfig()
        edges = [mk_edge(0)]
        with pytest.raises(KeyError, match="unallocated"):
            processing_time(mk_task(0, 4e9), edges[0], ComputeAssignment(), cfg, edges)

    def test_sum_matches_objective_at_optimum(self):
        # total execution time equals the allocation objective evaluated at
        # the closed-form shares
        cfg = ScenarioConfig()
        edges = [mk_edge(0)]
        tasks = [mk_task(i, c) for i, c in enumerate((2e9, 5e8, 9e9))]
        shares = kkt_allocate(tasks, 3e9)
        asg = ComputeAssignment(c={(t.id, 0): shares[t.id] for t in tasks})
        total = sum(processing_time(t, edges[0], asg, cfg, edges) for t in tasks)
        objective = sum(t.cycles / shares[t.id] for t in tasks)
        assert total == pytest.approx(objective, rel=1e-12)

    def test_numerical_oracle_agreement(self):
        from scipy.optimize import minimize

        rng = np.random.default_rng(3)
        tasks = [mk_task(i, c) for i, c in enumerate(rng.uniform(1e8, 8e9, size=5))]
        cycles = np.asarray([t.cycles for t in tasks])
        c_e = 4e9
        shares = kkt_allocate(tasks, c_e)
        mine = float(sum(cycles[i] / shares[i] for i in range(5)))
        # optimize in budget fractions: the raw Hz scale is ill-conditioned
        res = minimize(
            lambda f: (cycles / (c_e * f)).sum(),
            x0=np.full(5, 1.0 / 5),
            bounds=[(1e-9, 1.0)] * 5,
            constraints=[{"type": "ineq", "fun": lambda f: 1.0 - f.sum()}],
            method="SLSQP",
            options={"ftol": 1e-14, "maxiter": 1000},
        )
        assert mine == pytest.approx(float(res.fun), rel=1e-6)
