"""Scripted policies and the episode rollout harness.

A policy is a callable ``(actor_obs, critic_state) -> (action, event)``
where ``event`` is ``None``, ``"attach"`` or ``"detach"``. The oracle reads
the privileged critic state; it is a test instrument for the environment,
reward and evaluator, not a model of learnable behaviour.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .assets import ToolSpec
from .control import ControlConfig
from .env import CriticState, ToolEnv
from .geometry import Pose, compose, invert, quat_from_axis_angle, quat_mul, random_unit_vector
from .planners import DEFAULT_DAMPING, pose_error, projected_dls_step
from .robot import RobotModel
from .seeding import derive_rng
from .trajectory import Frame


def oracle_policy_step(
    critic: CriticState,
    model: RobotModel,
    tool: ToolSpec,
    control: ControlConfig | None = None,
    mu: float = DEFAULT_DAMPING,
    attach_radius: float = 0.02,
    hand_close: float = 0.5,
) -> tuple[np.ndarray, str | None]:
    """Phase 1 servoes the palm onto the grasp-box centre and asks to attach;
    phase 2 moves the palm to ``goal * grab^-1`` so the held object tracks the goal.

    Joint corrections come from one DLS step (joints pinned at a limit are
    left out) and become arm actions by dividing by ``k_arm``; if any
    component exceeds 1 the whole vector is scaled down into [-1, 1].
    """
    control = control or ControlConfig()
    q = critic.clean.q
    n_arm = model.n_arm
    T = model.link_transforms(q)
    palm = Pose.from_matrix(model.frame_matrix(q, model.palm, T))
    J = model.jacobian(q, model.palm, transforms=T)[:, :n_arm]
    q_arm, lo, hi = q[:n_arm], model.lower[:n_arm], model.upper[:n_arm]
    event = None
    if not critic.attached:
        centre = critic.object_pose.apply(tool.grasp_box.center)
        e = centre - palm.translation
        dq = projected_dls_step(J[:3], e, mu, q_arm, lo, hi)
        if np.linalg.norm(e) < attach_radius:
            event = "attach"
        hand = np.zeros(model.n_hand)
    else:
        target = compose(critic.goal_pose, invert(critic.grab))
        dq = projected_dls_step(J, pose_error(palm, target), mu, q_arm, lo, hi)
        hand = np.full(model.n_hand, hand_close)
    a_arm = dq / control.k_arm
    # scale rather than clip per joint so the Cartesian direction survives
    peak = np.max(np.abs(a_arm))
    if peak > 1.0:
        a_arm = a_arm / peak
    action = np.concatenate([a_arm, hand])
    return action, event


class OraclePolicy:
    def __init__(self, model: RobotModel, tool: ToolSpec, control: ControlConfig | None = None, **kwargs):
        self.model, self.tool, self.control, self.kwargs = model, tool, control, kwargs

    def reset(self) -> None:
        pass

    def __call__(self, actor, critic):
        return oracle_policy_step(critic, self.model, self.tool, self.control, **self.kwargs)


def random_policy_step(rng: np.random.Generator, n_joints: int = 29) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=n_joints)


class RandomPolicy:
    def __init__(self, n_joints: int, seed: int = 0, index: int = 0):
        self.n_joints, self.seed, self.index = n_joints, seed, index
        self.reset()

    def reset(self) -> None:
        self.rng = derive_rng(self.seed, "policy", self.index)

    def __call__(self, actor, critic):
        return random_policy_step(self.rng, self.n_joints), None


class FrozenPolicy:
    """Zero arm deltas; the hand holds the middle of its range."""

    def __init__(self, n_joints: int):
        self.n_joints = n_joints

    def reset(self) -> None:
        pass

    def __call__(self, actor, critic):
        return np.zeros(self.n_joints), None


def make_policy(name: str, model: RobotModel, tool: ToolSpec, control: ControlConfig | None = None, seed: int = 0, index: int = 0):
    if name == "oracle":
        return OraclePolicy(model, tool, control)
    if name == "random":
        return RandomPolicy(model.n_joints, seed, index)
    if name == "frozen":
        return FrozenPolicy(model.n_joints)
    raise ValueError(f"unknown policy {name!r}")


@dataclass
class EpisodeResult:
    seed: int
    steps: int
    termination: str
    total_reward: float
    success_events: int
    frames: list[Frame] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "steps": self.steps,
            "termination": self.termination,
            "total_reward": self.total_reward,
            "success_events": self.success_events,
        }


FAILURES = ("fallen", "dropped", "wander", "force", "timeout")


def rollout_episode(env: ToolEnv, policy, seed: int, goals: list[Pose] | None = None, record: bool = True) -> EpisodeResult:
    """Run one episode to termination.

    ``frames`` carry the post-step object pose and, on a failing final
    step, the termination reason, ready for the progress evaluator.
    """
    actor, critic = env.reset(seed, goals=goals)
    policy.reset()
    frames, records = [], []
    total, successes = 0.0, 0
    done = False
    info = {"termination": "running"}
    while not done:
        action, event = policy(actor, critic)
        actor, critic, reward, done, info = env.step(action, event)
        total += reward
        successes += "success" in info["events"]
        term = info["termination"]
        frames.append(Frame(critic.object_pose, term if term in FAILURES else None))
        if record:
            records.append({
                "step": env.state.step,
                "q": env.state.q.tolist(),
                "object_pose": critic.object_pose.to_list(),
                "goal_pose": critic.goal_pose.to_list(),
                "d": info["d"],
                "d_star": info["d_star"],
                "reward_terms": info["terms"].as_dict(),
                "events": info["events"],
                "termination": term,
            })
    return EpisodeResult(int(seed), env.state.step, info["termination"], total, successes, frames, records)


def write_episode_log(path, result: EpisodeResult) -> None:
    """JSONL: one header line then one record per step."""
    from ._io import atomic_write_text

    lines = [json.dumps({"episode": result.summary()})]
    lines += [json.dumps(r) for r in result.records]
    atomic_write_text(path, "\n".join(lines) + "\n")


def easy_goal_chain(
    env: ToolEnv,
    seed: int,
    n_goals: int = 3,
    lift: float = 0.17,
    step_translation: float = 0.03,
    step_rotation_deg: float = 10.0,
) -> list[Pose]:
    """Goals a scripted grasp can reach: the spawn pose lifted by ``lift``, then
    small translations (never toward the robot) and rotations.

    Deterministic in ``seed`` (uses its own random stream) and computed from
    the spawn pose the environment produces for that seed.
    """
    env.reset(seed)
    spawn = env.state.object_pose
    rng = derive_rng(seed, "easy_goals", env.env_index)
    goal = Pose(spawn.translation + np.array([0.0, 0.0, lift]), spawn.rotation)
    goals = [goal]
    for _ in range(n_goals - 1):
        step = random_unit_vector(rng)
        step[1] = -abs(step[1])  # away from the robot base, where the arm folds up
        t = goal.translation + step_translation * step
        r = quat_mul(quat_from_axis_angle(random_unit_vector(rng), np.radians(step_rotation_deg) * rng.random()), goal.rotation)
        goal = Pose(t, r)
        goals.append(goal)
    return goals


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
