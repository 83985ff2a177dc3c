"""Sim-to-real randomization: FIFO latency, sensor noise, wrenches, bbox jitter.

Delays are sampled once per episode per channel and held constant.
Wrench components are uniform in ``[-scale, scale]``. Rotation noise is a
rotation about a uniformly random axis by a N(0, sigma^2) angle.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ToolforgeError, ValidationError
from .geometry import Pose, quat_from_axis_angle, quat_mul, random_unit_vector


@dataclass(frozen=True)
class RandomizationConfig:
    enabled: bool = True
    obs_delay_max: int = 3
    action_delay_max: int = 3
    object_pose_delay_max: int = 10
    joint_vel_noise: float = 0.1  # rad/s
    object_pos_noise: float = 0.01  # m
    object_rot_noise_deg: float = 5.0
    force_scale: float = 5.0  # N
    torque_scale: float = 0.5  # N m
    bbox_fraction: float = 0.1
    wrench_probability: float = 0.02

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if name != "enabled" and not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"dr.{name} must be non-negative, got {v}")
        for name in ("obs_delay_max", "action_delay_max", "object_pose_delay_max"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValidationError(f"dr.{name} must be an integer")
        if self.wrench_probability > 1:
            raise ValidationError("dr.wrench_probability must be <= 1")

    @property
    def object_rot_noise(self) -> float:
        return math.radians(self.object_rot_noise_deg)


class DelayQueue:
    """FIFO that returns the payload pushed ``delay`` steps ago.

    Until enough history exists the oldest stored payload is returned, so
    the output at push ``t`` (0-based) is input ``max(t - delay, 0)``.
    """

    def __init__(self, max_delay: int, delay: int = 0):
        if max_delay < 0 or not 0 <= delay <= max_delay:
            raise ValidationError(f"delay {delay} outside [0, {max_delay}]")
        self.max_delay = int(max_delay)
        self.delay = int(delay)
        self._buf: deque[Any] = deque(maxlen=self.delay + 1)

    @classmethod
    def sampled(cls, max_delay: int, rng: np.random.Generator) -> "DelayQueue":
        return cls(max_delay, int(rng.integers(0, max_delay + 1)))

    def reset(self) -> None:
        self._buf.clear()

    def push_pop(self, payload):
        self._buf.append(payload)
        return self._buf[0]

    def pop(self):
        """Current delayed value without pushing."""
        if not self._buf:
            raise ToolforgeError("delay queue is empty; push a payload first")
        return self._buf[0]

    def __len__(self) -> int:
        return len(self._buf)


def delay_push_pop(queue: DelayQueue, payload):
    return queue.push_pop(payload)


def perturb_pose(pose: Pose, sigma_t: float, sigma_r: float, rng: np.random.Generator) -> Pose:
    if sigma_t < 0 or sigma_r < 0:
        raise ValidationError("noise standard deviations must be non-negative")
    if sigma_t == 0 and sigma_r == 0:
        return pose
    t = pose.translation + rng.normal(0.0, sigma_t, size=3) if sigma_t > 0 else pose.translation
    q = pose.rotation
    if sigma_r > 0:
        axis = random_unit_vector(rng)
        q = quat_mul(quat_from_axis_angle(axis, rng.normal(0.0, sigma_r)), q)
    return Pose(t, q)


def sample_wrench(rng: np.random.Generator, config: RandomizationConfig) -> tuple[np.ndarray, np.ndarray]:
    force = rng.uniform(-1.0, 1.0, size=3) * config.force_scale
    torque = rng.uniform(-1.0, 1.0, size=3) * config.torque_scale
    return force, torque


def perturb_bbox(extents, rng: np.random.Generator, fraction: float, floor: float = 1e-3) -> np.ndarray:
    ext = np.asarray(extents, dtype=float)
    if np.any(ext <= 0):
        raise ValidationError("bbox extents must be positive")
    if not 0 <= fraction < 1:
        raise ValidationError("bbox fraction must be in [0, 1)")
    if fraction == 0:
        return ext.copy()
    return np.maximum(ext * rng.uniform(1.0 - fraction, 1.0 + fraction, size=ext.shape), floor)


def sample_table_offset(rng: np.random.Generator, half_range: float) -> float:
    return float(rng.uniform(-half_range, half_range)) if half_range > 0 else 0.0
