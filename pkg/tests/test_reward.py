import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toolforge.reward import (
    CSV_COLUMNS,
    RewardConfig,
    RewardLog,
    RewardState,
    approach_reward,
    goal_reward,
    lift_reward,
    smoothness_reward,
    total_reward,
)

C = RewardConfig()


def test_table_values():
    assert (C.lambda_arm, C.lambda_hand, C.lambda_approach, C.lambda_lift) == (0.03, 0.003, 50.0, 20.0)
    assert (C.lifted_bonus, C.lambda_goal, C.success_bonus) == (300.0, 200.0, 1000.0)
    assert (C.success_tolerance, C.z_init, C.z_lifted) == (0.01, 0.63, 0.73)
    assert RewardConfig.preset("eval").success_tolerance == 0.02
    assert RewardConfig.preset("train") == C


def test_smoothness():
    assert smoothness_reward(np.zeros(7), np.zeros(22), C) == 0.0
    assert smoothness_reward(np.ones(7), np.zeros(22), C) == pytest.approx(-0.21)
    qa, qh = np.linspace(-1, 1, 7), np.linspace(0, 2, 22)
    assert smoothness_reward(3 * qa, 3 * qh, C) == pytest.approx(3 * smoothness_reward(qa, qh, C))
    with pytest.raises(ValueError):
        smoothness_reward([np.nan] * 7, np.zeros(22), C)


def test_approach():
    s = RewardState()
    s.reset(0.30, 1.0)
    assert approach_reward(0.30, s, C) == 0.0
    assert approach_reward(0.25, s, C) == pytest.approx(2.5)
    assert s.dbar_star_ft == 0.25
    assert approach_reward(0.28, s, C) == 0.0 and s.dbar_star_ft == 0.25


def test_lift():
    s = RewardState()
    s.reset(0.3, 1.0)
    assert lift_reward(0.63, s, C)[0] == 0.0
    assert lift_reward(0.68, s, C) == (pytest.approx(1.0), False)
    r, paid = lift_reward(0.74, s, C)
    assert r == pytest.approx(302.2) and paid and s.grasped
    # once grasped the total reward no longer evaluates the lift term
    terms = total_reward(np.zeros(7), np.zeros(22), 0.3, 0.74, 0.5, s, C)
    assert terms.lift == 0.0 and not terms.lifted_event


def test_goal():
    s = RewardState(d_star=0.10)
    assert goal_reward(0.10, s, C) == (0.0, False)
    r, hit = goal_reward(0.08, s, C)
    assert r == pytest.approx(4.0) and not hit and s.d_star == 0.08
    r, hit = goal_reward(0.005, s, C)
    assert r == pytest.approx(200 * 0.075 + 1000.0) and hit


def test_pre_grasp_idle_is_zero():
    s = RewardState()
    s.reset(0.2, 0.5)
    t = total_reward(np.zeros(7), np.zeros(22), 0.2, 0.6, 0.5, s, C)
    assert t.total == 0.0


def _drive(d_seq, z_seq, config=C, resample=lambda k: 0.3):
    """Feed synthetic distances through total_reward, resampling goals on success.

    Returns per-goal (initial d, min d, dense sum), success count and lifted count.
    """
    s = RewardState()
    s.reset(0.3, d_seq[0])
    goals = [[d_seq[0], d_seq[0], 0.0]]
    successes = lifted = 0
    for d, z in zip(d_seq, z_seq):
        was_grasped = s.grasped
        t = total_reward(np.zeros(7), np.zeros(22), 0.3, z, d, s, config)
        lifted += t.lifted_event
        if was_grasped:
            g = goals[-1]
            g[1] = min(g[1], d)
            g[2] += t.goal_dense
            if t.success:
                successes += 1
                d_new = resample(successes)
                s.new_goal(d_new)
                goals.append([d_new, d_new, 0.0])
    return goals, successes, lifted, s


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_telescoping(seed):
    rng = np.random.default_rng(seed)
    n = 10_000
    d = np.abs(0.3 + np.cumsum(rng.normal(0, 0.01, n)))
    z = np.full(n, 0.8)  # grasped from the first step
    s0 = RewardState()
    s0.reset(0.3, 0.3)
    goals, successes, lifted, _ = _drive(d, z, resample=lambda k: 0.3)
    for d0, dmin, dense in goals:
        expected = C.lambda_goal * (d0 - dmin)
        assert dense == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert lifted == 1
    assert successes == len(goals) - 1


def test_success_once_per_goal():
    # three goals approached in turn; after the last one the distance stays inside the tolerance
    segments = [np.linspace(0.2, 0.0, 40) for _ in range(3)] + [np.zeros(50)]
    s = RewardState()
    s.reset(0.3, 0.2)
    s.grasped = True
    k, i, bonuses = 0, 0, 0
    for _ in range(170):
        t = total_reward(np.zeros(7), np.zeros(22), 0.3, 0.8, segments[k][i], s, C)
        i += 1
        if t.success:
            bonuses += 1
            if k < 2:
                k, i = k + 1, 0
                s.new_goal(segments[k][0])
            else:
                break
    assert bonuses == 3 == s.success_count


def test_lifted_bonus_at_most_once():
    z = np.concatenate([np.linspace(0.6, 0.8, 20), np.linspace(0.8, 0.6, 20), np.linspace(0.6, 0.8, 20)])
    _, _, lifted, _ = _drive(np.full(60, 0.5), z)
    assert lifted == 1


def test_static_object_earns_no_dense_goal_reward():
    d = np.full(200, 0.25)
    goals, *_ = _drive(d, np.full(200, 0.8))
    assert goals[0][2] == 0.0


def test_trackers_monotone(rng):
    s = RewardState()
    s.reset(0.4, 0.4)
    s.grasped = True
    prev_ft, prev_d = s.dbar_star_ft, s.d_star
    for _ in range(500):
        total_reward(np.zeros(7), np.zeros(22), rng.uniform(0, 0.5), 0.8, rng.uniform(0.02, 0.5), s, C)
        assert s.dbar_star_ft <= prev_ft and s.d_star <= prev_d
        prev_ft, prev_d = s.dbar_star_ft, s.d_star


def test_negative_coefficient_rejected():
    with pytest.raises(ValueError, match="lambda_goal"):
        RewardConfig(lambda_goal=-1.0)
    with pytest.raises(ValueError):
        RewardConfig.preset("nope")


def test_csv_log(tmp_path):
    log = RewardLog()
    s = RewardState()
    s.reset(0.3, 0.3)
    for k in range(3):
        t = total_reward(np.zeros(7), np.zeros(22), 0.3 - 0.01 * k, 0.65, 0.3, s, C)
        log.record(k, t, 0.3, s.d_star)
    log.write_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4
    assert math.isclose(float(rows[2][2]), 0.5)
