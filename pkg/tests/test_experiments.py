from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from streamsim.experiments import (ExperimentConfig, GeneralInstance, RegionResult, capacity_report,
                                   compare_delay_bounds, general_from_kv, grid_values, nesting_report, parse_kv,
                                   point_seed, sweep_region)
from streamsim.capacity import HomogeneousSpec, StateSpaceTooLarge
from streamsim.model import ConfigError
from streamsim.scheduling import PolicyKind
from streamsim.traffic import MarkovSource

F = Fraction


def small_cfg(data_dir, **over):
    kv = {"trace": str(data_dir / "synthetic_vbr.txt"), "group_a": "2", "group_b": "2",
          "delay_bound": "100-400", "reliability": "0.6-1.0", "policies": "EPDF,EDF",
          "grid_step": "0.25", "horizon_slots": "20000", "seed": "3"}
    kv.update(over)
    return ExperimentConfig.from_kv(kv)


def test_parse_kv():
    kv = parse_kv("# c\nA = 1\nclient.2.delay-bound = 7 # tail\n\nA=2\n")
    assert kv == {"a": "2", "client.2.delay_bound": "7"}
    with pytest.raises(ConfigError):
        parse_kv("no equals sign")


def test_config_spreads_and_deals(data_dir):
    cfg = small_cfg(data_dir)
    # 100,200,300,400 dealt alternately: A gets ranks 0,2 and B ranks 1,3
    assert cfg.delay_bounds == [100, 300, 200, 400]
    assert cfg.reliabilities[0] == F(3, 5) and cfg.reliabilities[-1] == 1
    assert cfg.m_frames == [53]  # one 25 fps frame period in 750 us slots


def test_config_group_and_client_overrides(data_dir):
    cfg = small_cfg(data_dir, **{"delay_bound.b": "50", "client.1.reliability": "0.9"})
    assert cfg.delay_bounds[2:] == [50, 50]
    assert cfg.reliabilities[0] == F(9, 10)


@pytest.mark.parametrize("over", [{"group_a": "0"}, {"grid_step": "0.3"}, {"grid_step": "0"},
                                  {"trace": "/nonexistent.txt"}, {"client.9.reliability": "1"},
                                  {"client.1.colour": "red"}, {"policies": "FIFO"}, {"horizon_slots": "x"}])
def test_config_errors(data_dir, over):
    with pytest.raises(ConfigError):
        small_cfg(data_dir, **over)


def test_requirements_follow_groups(data_dir):
    cfg = small_cfg(data_dir)
    clients = cfg.clients(F(1, 2), F(1, 4))
    rates = cfg.rates()
    assert [c.required_throughput for c in clients] == [rates[0] / 2, rates[1] / 2, rates[2] / 4, rates[3] / 4]


def test_grid_and_seeds():
    assert grid_values(F(1, 4)) == [0, F(1, 4), F(1, 2), F(3, 4), 1]
    assert point_seed(1, 2, 3) == point_seed(1, 2, 3)
    assert len({point_seed(1, i, j) for i in range(5) for j in range(5)}) == 25


def test_sweep_trivial_corners(data_dir):
    # ten clients at p < 1 offer more work than one link can carry at X = Y = 1
    cfg = ExperimentConfig.load(data_dir / "policies.cfg")
    cfg.horizon, cfg.grid_step = 20000, F(1, 2)
    cfg.reliabilities = [min(p, F(9, 10)) for p in cfg.reliabilities]
    for pol in (PolicyKind.EPDF, PolicyKind.LDF, PolicyKind.EDF, PolicyKind.COST_INDEX):
        r = sweep_region(cfg, pol)
        assert r.achieved.shape == (3, 3)
        assert r.achieved[0, 0]
        assert not r.achieved[-1, -1]


def test_sweep_parallel_matches_serial(data_dir):
    cfg = small_cfg(data_dir)
    a = sweep_region(cfg, "EPDF", workers=1)
    b = sweep_region(cfg, "EPDF", workers=2)
    assert a.to_csv() == b.to_csv()


def test_region_helpers():
    xs = grid_values(F(1, 2))
    acc = np.array([[1, 1, 0], [1, 0, 0], [0, 1, 0]], dtype=bool)
    r = RegionResult("EPDF", xs, xs, acc, np.zeros((3, 3, 1)))
    assert r.frontier() == [(0, F(1, 2)), (F(1, 2), 0), (1, F(1, 2))]
    assert r.staircase_violations() == [(1, F(1, 2))]
    bigger = RegionResult("EPDF", xs, xs, acc | np.eye(3, dtype=bool), np.zeros((3, 3, 1)))
    assert bigger.contains(r) and not r.contains(bigger)
    rep = nesting_report(r, bigger, F(1, 2))
    assert rep["nested"] and rep["nested_within_one_cell"]
    lines = r.to_csv().splitlines()
    assert lines[0] == "policy,delay_bound,X,Y,achieved,shortfall_1"
    assert lines[1] == "EPDF,,0,0,1,0"


def test_compare_delay_bounds_single_tau(data_dir):
    cfg = small_cfg(data_dir)
    regions, report = compare_delay_bounds(cfg, [200])
    assert report == [] and len(regions) == 1
    plain = sweep_region(cfg.with_delay_bound(200), PolicyKind.EPDF)
    assert (regions[0].achieved == plain.achieved).all()


def test_capacity_report_homogeneous():
    rep = capacity_report(HomogeneousSpec(1, 2, 1, F(1, 2)))
    assert rep["q_max"] == pytest.approx(0.375)
    assert rep["edf_idle_slots_per_interval"] == pytest.approx(0.5)


def test_capacity_report_general_verdicts():
    inst = GeneralInstance([1.0], [1], [MarkovSource.constant(1)], [1.0])
    assert capacity_report(inst)["feasible"]
    inst.required = [1.01]
    rep = capacity_report(inst)
    assert not rep["feasible"] and rep["shortfall"] == pytest.approx(0.01, abs=1e-9)


def test_capacity_report_size_cap():
    inst = GeneralInstance([1.0] * 3, [6] * 3, [MarkovSource.constant(1)] * 3, [0.1] * 3, state_cap=100)
    with pytest.raises(StateSpaceTooLarge):
        capacity_report(inst)


def test_general_from_kv(data_dir):
    kv = parse_kv((data_dir / "lp_markov.cfg").read_text())
    inst = general_from_kv(kv)
    assert inst.delay_bounds == [2, 1] and inst.direction == [1.0, 1.0]
    assert inst.sources[0].emission.tolist() == [0, 2]
    with pytest.raises(ConfigError):
        general_from_kv({"clients": "1", "client.1.reliability": "1", "client.1.delay_bound": "1",
                         "client.1.transition": "0.5,0.4"})
