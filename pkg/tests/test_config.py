import dataclasses
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vecsim.config import (
    MB_BITS,
    ScenarioConfig,
    build_edges,
    dbm_to_mw,
    edge_positions,
    grid_shape,
    load_config,
    mw_to_dbm,
    parse_config_text,
    validate_config,
)


def test_defaults_are_valid():
    assert validate_config(ScenarioConfig()) == []


def test_default_values_match_expected_units():
    cfg = ScenarioConfig()
    assert cfg.bandwidth_hz == 20e6
    assert cfg.max_power_mw == 1e3
    assert cfg.comm_range_m == 500.0
    assert cfg.wired_rate_bps == 50e6
    assert cfg.distance_discount_per_m == pytest.approx(6.667e-4)
    assert cfg.noise_mw == pytest.approx(1e-9)
    assert cfg.path_loss_exp == 3.0
    assert cfg.task_size_bits_range == (0.01 * MB_BITS, 5 * MB_BITS)
    assert cfg.task_size_bits_range == (8e4, 4e7)
    assert cfg.cycles_per_bit == 500.0
    assert cfg.deadline_s_range == (5.0, 10.0)
    assert cfg.cpu_range_hz == (3e9, 10e9)


def test_arrival_prob_out_of_range_rejected():
    errors = validate_config(dataclasses.replace(ScenarioConfig(), arrival_prob=1.3))
    assert any("arrival_prob" in e for e in errors)


def test_inverted_range_rejected():
    cfg = dataclasses.replace(
        ScenarioConfig(), task_size_bits_range=(5 * MB_BITS, 0.01 * MB_BITS)
    )
    errors = validate_config(cfg)
    assert any("range inverted" in e for e in errors)


def test_nonpositive_quantity_rejected():
    errors = validate_config(dataclasses.replace(ScenarioConfig(), bandwidth_hz=0.0))
    assert any("bandwidth_hz" in e for e in errors)


def test_minus_90_dbm_is_exactly_1e_minus_9_mw():
    assert dbm_to_mw(-90.0) == 1e-9


@given(st.floats(min_value=-120.0, max_value=60.0))
def test_dbm_mw_round_trip(dbm):
    assert mw_to_dbm(dbm_to_mw(dbm)) == pytest.approx(dbm, rel=1e-12, abs=1e-12)


def test_nine_edge_grid_is_three_by_three_cell_centers():
    cfg = ScenarioConfig()
    assert grid_shape(cfg) == (3, 3)
    pos = edge_positions(cfg)
    assert pos.shape == (9, 2)
    assert pos[0].tolist() == [500.0, 500.0]
    assert pos[4].tolist() == [1500.0, 1500.0]
    assert pos[8].tolist() == [2500.0, 2500.0]


def test_build_edges_samples_cpu_in_range_deterministically():
    cfg = ScenarioConfig()
    a = build_edges(cfg, 42)
    b = build_edges(cfg, 42)
    assert [e.cpu_hz for e in a] == [e.cpu_hz for e in b]
    lo, hi = cfg.cpu_range_hz
    assert all(lo <= e.cpu_hz <= hi for e in a)
    assert [e.id for e in a] == list(range(9))


def test_parse_config_round_trip_fields():
    text = """
    # scenario
    num_edges = 4
    edge_grid = 2x2
    arrival_prob = 0.3
    cpu_range_hz = 1e9, 10e9
    horizon_slots = 60
    """
    cfg = parse_config_text(text)
    assert cfg.num_edges == 4
    assert cfg.edge_grid == "2x2"
    assert cfg.arrival_prob == 0.3
    assert cfg.cpu_range_hz == (1e9, 10e9)
    assert cfg.horizon_slots == 60


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config_text("not_a_field = 3\n")


def test_load_config_validates(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("arrival_prob = 1.5\n")
    with pytest.raises(ValueError, match="arrival_prob"):
        load_config(path)
