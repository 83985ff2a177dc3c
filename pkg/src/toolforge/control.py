"""Policy action -> joint position targets.

Arm actions are deltas on the previous target (clip to limits, then EMA);
hand actions are absolute positions mapped affinely onto the joint range
(EMA, then clip). The EMA is ``alpha * new + (1 - alpha) * prev``, so
``alpha = 1`` disables smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ControlConfig:
    k_arm: float = 0.025
    alpha_arm: float = 0.1
    alpha_hand: float = 0.1

    def __post_init__(self):
        if not self.k_arm > 0:
            raise ValidationError("control.k_arm must be positive")
        for name in ("alpha_arm", "alpha_hand"):
            a = getattr(self, name)
            if not 0 < a <= 1:
                raise ValidationError(f"control.{name} must be in (0, 1], got {a}")


@dataclass
class ControlState:
    """Previous joint position targets (length J) and the joint limits."""

    prev_target: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_arm: int

    @classmethod
    def for_model(cls, model, q=None) -> "ControlState":
        state = cls(np.zeros(model.n_joints), np.asarray(model.lower), np.asarray(model.upper), model.n_arm)
        reset_control(state, model.default_q if q is None else q)
        return state


def _clip_action(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    # NaN actions are treated as zero so the targets stay finite
    return np.clip(np.nan_to_num(a, nan=0.0, posinf=1.0, neginf=-1.0), -1.0, 1.0)


def _ema(new, prev, alpha: float) -> np.ndarray:
    # incremental form keeps a saturated joint exactly put; alpha = 1 is exact passthrough
    if alpha == 1.0:
        return np.array(new, dtype=float)
    return prev + alpha * (new - prev)


def process_arm_action(a_arm, state: ControlState, config: ControlConfig) -> np.ndarray:
    sl = slice(0, state.n_arm)
    a = _clip_action(a_arm)
    prev = state.prev_target[sl]
    lo, hi = state.lower[sl], state.upper[sl]
    intermediate = np.clip(prev + config.k_arm * a, lo, hi)
    target = _ema(intermediate, prev, config.alpha_arm)
    state.prev_target[sl] = target
    return target.copy()


def process_hand_action(a_hand, state: ControlState, config: ControlConfig) -> np.ndarray:
    sl = slice(state.n_arm, len(state.prev_target))
    a = _clip_action(a_hand)
    lo, hi = state.lower[sl], state.upper[sl]
    absolute = 0.5 * (a + 1.0) * (hi - lo) + lo
    target = _ema(absolute, state.prev_target[sl], config.alpha_hand)
    target = np.clip(target, lo, hi)
    state.prev_target[sl] = target
    return target.copy()


def process_action(action, state: ControlState, config: ControlConfig) -> np.ndarray:
    """Full J-vector action to J-vector joint targets."""
    action = np.asarray(action, dtype=float)
    if action.shape != state.prev_target.shape:
        raise ValidationError(f"action has shape {action.shape}, expected {state.prev_target.shape}")
    process_arm_action(action[: state.n_arm], state, config)
    process_hand_action(action[state.n_arm :], state, config)
    return state.prev_target.copy()


def reset_control(state: ControlState, q_current) -> None:
    state.prev_target = np.clip(np.asarray(q_current, dtype=float), state.lower, state.upper).copy()
