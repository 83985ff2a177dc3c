"""Goal-reaching reward with stateful progress trackers.

    r = r_smooth + r_approach + (1 - grasped) * r_lift + grasped * r_goal

``r_goal`` pays ``lambda_goal`` times the improvement over the best distance
so far for the current goal, plus ``B_succ`` once when ``d < eps``. The
scale multiplies only the dense term. The ``grasped`` gate uses the latch
as it was at the start of the step; lifting past ``z_lifted`` sets it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class RewardConfig:
    lambda_arm: float = 0.03
    lambda_hand: float = 0.003
    lambda_approach: float = 50.0
    lambda_lift: float = 20.0
    lifted_bonus: float = 300.0
    lambda_goal: float = 200.0
    success_bonus: float = 1000.0
    success_tolerance: float = 0.01  # m
    z_init: float = 0.63  # m
    z_lifted: float = 0.73  # m

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"reward.{name} must be non-negative, got {v}")

    @classmethod
    def preset(cls, name: str) -> "RewardConfig":
        """``train`` uses a 1 cm success tolerance, ``eval`` 2 cm."""
        if name == "train":
            return cls()
        if name == "eval":
            return cls(success_tolerance=0.02)
        raise ValidationError(f"unknown reward preset {name!r}")


@dataclass
class RewardState:
    d_star: float = math.inf
    dbar_star_ft: float = math.inf
    grasped: bool = False
    lifted_bonus_paid: bool = False
    success_count: int = 0

    def reset(self, mean_ft_dist: float, goal_dist: float) -> None:
        self.d_star = float(goal_dist)
        self.dbar_star_ft = float(mean_ft_dist)
        self.grasped = False
        self.lifted_bonus_paid = False
        self.success_count = 0

    def new_goal(self, goal_dist: float) -> None:
        self.d_star = float(goal_dist)


@dataclass
class RewardTerms:
    smooth: float = 0.0
    approach: float = 0.0
    lift: float = 0.0
    goal: float = 0.0
    goal_dense: float = 0.0
    success: bool = False
    lifted_event: bool = False
    total: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def smoothness_reward(qd_arm, qd_hand, config: RewardConfig) -> float:
    qd_arm = np.asarray(qd_arm, dtype=float)
    qd_hand = np.asarray(qd_hand, dtype=float)
    if not (np.all(np.isfinite(qd_arm)) and np.all(np.isfinite(qd_hand))):
        raise ValidationError("joint velocities must be finite")
    return float(-config.lambda_arm * np.abs(qd_arm).sum() - config.lambda_hand * np.abs(qd_hand).sum())


def approach_reward(mean_ft_dist: float, state: RewardState, config: RewardConfig) -> float:
    r = config.lambda_approach * max(state.dbar_star_ft - mean_ft_dist, 0.0)
    state.dbar_star_ft = min(state.dbar_star_ft, mean_ft_dist)
    return r


def lift_reward(z: float, state: RewardState, config: RewardConfig) -> tuple[float, bool]:
    """Returns ``(reward, lifted_bonus_paid_now)``; latches ``grasped``."""
    r = config.lambda_lift * max(z - config.z_init, 0.0)
    paid = False
    if z >= config.z_lifted:
        if not state.lifted_bonus_paid:
            r += config.lifted_bonus
            state.lifted_bonus_paid = True
            paid = True
        state.grasped = True
    return r, paid


def goal_reward(d: float, state: RewardState, config: RewardConfig) -> tuple[float, bool]:
    dense = config.lambda_goal * max(state.d_star - d, 0.0)
    state.d_star = min(state.d_star, d)
    reached = d < config.success_tolerance
    if reached:
        state.success_count += 1
    return dense + (config.success_bonus if reached else 0.0), reached


def total_reward(
    qd_arm,
    qd_hand,
    mean_ft_dist: float,
    z: float,
    d: float,
    state: RewardState,
    config: RewardConfig,
) -> RewardTerms:
    """One step of the composite reward. The caller resamples the goal on success."""
    terms = RewardTerms()
    terms.smooth = smoothness_reward(qd_arm, qd_hand, config)
    terms.approach = approach_reward(mean_ft_dist, state, config)
    if state.grasped:
        before = state.d_star
        terms.goal, terms.success = goal_reward(d, state, config)
        terms.goal_dense = config.lambda_goal * max(before - d, 0.0)
    else:
        terms.lift, terms.lifted_event = lift_reward(z, state, config)
    terms.total = terms.smooth + terms.approach + terms.lift + terms.goal
    return terms


@dataclass
class RewardLog:
    """Per-step breakdown, written as ``step, r_smooth, r_approach, r_lift, r_goal, d, d_star``."""

    rows: list[tuple] = field(default_factory=list)

    def record(self, step: int, terms: RewardTerms, d: float, d_star: float) -> None:
        self.rows.append((step, terms.smooth, terms.approach, terms.lift, terms.goal, d, d_star))

    def write_csv(self, path) -> None:
        write_reward_csv(path, self.rows)


CSV_COLUMNS = ("step", "r_smooth", "r_approach", "r_lift", "r_goal", "d", "d_star")


def write_reward_csv(path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])
