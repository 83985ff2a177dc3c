"""Goal-reaching tool manipulation environment with attach-to-palm dynamics.

There is no contact simulation. A grasped object rigidly follows the palm
through a grab transform fixed at attach time; a free object either rests
on the table or falls ballistically. Joint targets from the control
pipeline are taken as the joint positions, interpolated across the
physics substeps.

World frame: z up, table surface centred at ``(0, 0, table_z)``; the robot
stands on the +y side and faces -y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assets import ToolSpec
from .control import ControlConfig, ControlState, process_action
from .errors import EpisodeDoneError, ValidationError
from .geometry import (
    REWARD_KEYPOINT_SCALES,
    Pose,
    compose,
    invert,
    keypoint_distance,
    keypoint_offsets,
    quat_from_axis_angle,
    quat_from_rotvec,
    quat_mul,
    quat_to_rotvec,
    quat_conj,
    random_rotation,
    random_unit_vector,
)
from .randomization import (
    DelayQueue,
    RandomizationConfig,
    perturb_bbox,
    perturb_pose,
    sample_table_offset,
    sample_wrench,
)
from .reward import RewardConfig, RewardState, RewardTerms, total_reward
from .robot import RobotModel
from .seeding import derive_rng

TERMINATIONS = ("running", "fallen", "dropped", "wander", "force", "timeout", "max_success")


@dataclass(frozen=True)
class EnvConfig:
    episode_length: int = 600
    control_hz: int = 60
    sim_hz: int = 120
    object_xy_range: float = 0.10
    table_height_range: float = 0.01
    joint_init_noise: float = 0.1
    goal_x: tuple[float, float] = (-0.35, 0.35)
    goal_y: tuple[float, float] = (-0.1, 0.2)
    goal_z: tuple[float, float] = (0.15, 0.52)
    next_goal_max_translation: float = 0.1
    next_goal_max_rotation_deg: float = 90.0
    hand_wander_limit: float = 1.5
    table_force_limit: float = 100.0
    max_consecutive_successes: int = 50
    # lite-dynamics geometry, not among the tabulated hyperparameters
    table_z: float = 0.6
    table_half_extents: tuple[float, float] = (0.6, 0.45)
    table_stiffness: float = 5000.0  # N/m of palm penetration
    gravity: float = 9.81
    capture_radius: float = 0.03
    clamp_goals: bool = True

    def __post_init__(self):
        if self.sim_hz % self.control_hz:
            raise ValidationError("env.sim_hz must be a multiple of env.control_hz")
        if self.episode_length <= 0 or self.max_consecutive_successes <= 0:
            raise ValidationError("env.episode_length and env.max_consecutive_successes must be positive")
        for name in ("goal_x", "goal_y", "goal_z"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"env.{name} is inverted")

    @property
    def substeps(self) -> int:
        return self.sim_hz // self.control_hz

    @property
    def control_dt(self) -> float:
        return 1.0 / self.control_hz

    @property
    def sim_dt(self) -> float:
        return 1.0 / self.sim_hz


def workspace_bounds(config: EnvConfig, table_offset: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """World-frame goal box (relative ranges around the table surface centre)."""
    lo = np.array([config.goal_x[0], config.goal_y[0], config.table_z + table_offset + config.goal_z[0]])
    hi = np.array([config.goal_x[1], config.goal_y[1], config.table_z + table_offset + config.goal_z[1]])
    return lo, hi


def sample_initial_goal(rng: np.random.Generator, config: EnvConfig, table_offset: float = 0.0) -> Pose:
    lo, hi = workspace_bounds(config, table_offset)
    return Pose(rng.uniform(lo, hi), random_rotation(rng))


def sample_next_goal(prev_goal: Pose, rng: np.random.Generator, config: EnvConfig, table_offset: float = 0.0) -> Pose:
    """Perturb the previous goal: offset uniform in a ball, rotation about a
    uniform axis by an angle uniform in ``[0, max]``, then clamp to the box."""
    r_max = config.next_goal_max_translation
    a_max = math.radians(config.next_goal_max_rotation_deg)
    direction = random_unit_vector(rng)
    radius = r_max * rng.random() ** (1.0 / 3.0)
    axis = random_unit_vector(rng)
    angle = a_max * rng.random()
    t = prev_goal.translation + radius * direction
    if config.clamp_goals:
        lo, hi = workspace_bounds(config, table_offset)
        t = np.clip(t, lo, hi)
    return Pose(t, quat_mul(quat_from_axis_angle(axis, angle), prev_goal.rotation))


def ballistic_substep(pos, vel, dt: float, gravity: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact constant-acceleration update (no integration error under gravity)."""
    g = np.array([0.0, 0.0, -gravity])
    return pos + vel * dt + 0.5 * g * dt * dt, vel + g * dt


@dataclass
class ActorObservation:
    q: np.ndarray
    qd: np.ndarray
    prev_target: np.ndarray
    palm_pos: np.ndarray
    palm_quat: np.ndarray
    fingertips_rel: np.ndarray  # (5, 3)
    object_quat: np.ndarray
    keypoints_rel: np.ndarray  # (4, 3) object keypoints minus palm position
    keypoint_errors: np.ndarray  # (4, 3) object keypoints minus goal keypoints
    scales: np.ndarray

    FIELDS = ("q", "qd", "prev_target", "palm_pos", "palm_quat", "fingertips_rel", "object_quat", "keypoints_rel", "keypoint_errors", "scales")

    def vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, f)) for f in self.FIELDS])

    def layout(self) -> dict[str, slice]:
        out, k = {}, 0
        for f in self.FIELDS:
            n = np.size(getattr(self, f))
            out[f] = slice(k, k + n)
            k += n
        return out


@dataclass
class CriticState:
    """Clean actor fields plus privileged signals.

    ``object_pose``, ``goal_pose``, ``attached`` and ``grab`` are convenience
    attributes for scripted policies and are not part of ``vector()``.
    """

    clean: ActorObservation
    palm_lin_vel: np.ndarray
    palm_ang_vel: np.ndarray
    object_lin_vel: np.ndarray
    object_ang_vel: np.ndarray
    reward: float
    success_count: int
    min_fingertip_dist: float
    min_keypoint_dist: float
    steps: int
    grasped: bool
    object_pose: Pose = field(repr=False, default=None)
    goal_pose: Pose = field(repr=False, default=None)
    attached: bool = False
    grab: Pose | None = None

    def vector(self) -> np.ndarray:
        extras = np.array(
            [self.reward, self.success_count, self.min_fingertip_dist, self.min_keypoint_dist, self.steps, float(self.grasped)]
        )
        return np.concatenate(
            [self.clean.vector(), self.palm_lin_vel, self.palm_ang_vel, self.object_lin_vel, self.object_ang_vel, extras]
        )


@dataclass
class EpisodeState:
    q: np.ndarray
    qd: np.ndarray
    object_pose: Pose
    object_lin_vel: np.ndarray
    object_ang_vel: np.ndarray
    attached: bool
    grab: Pose | None
    resting: bool
    goal: Pose
    goal_index: int
    reward: RewardState
    control: ControlState
    table_offset: float
    obs_scales: np.ndarray
    step: int = 0
    done: bool = False
    termination: str = "running"
    palm_pose: Pose | None = None
    palm_lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    palm_ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    table_force: float = 0.0
    min_fingertip_dist: float = math.inf
    min_keypoint_dist: float = math.inf
    last_reward: float = 0.0

    def to_bytes(self) -> bytes:
        """Canonical byte snapshot, used to check determinism."""
        parts = [
            self.q, self.qd, np.asarray(self.object_pose.to_list()), self.object_lin_vel, self.object_ang_vel,
            np.asarray(self.goal.to_list()), self.control.prev_target, self.obs_scales,
            np.array([self.table_offset, self.goal_index, self.step, float(self.attached), float(self.resting),
                      self.reward.d_star, self.reward.dbar_star_ft, float(self.reward.grasped),
                      float(self.reward.lifted_bonus_paid), self.reward.success_count, self.last_reward]),
        ]
        if self.grab is not None:
            parts.append(np.asarray(self.grab.to_list()))
        return b"".join(np.ascontiguousarray(p, dtype=np.float64).tobytes() for p in parts)


class ToolEnv:
    """Single-owner environment instance.

    ``goals`` passed to :meth:`reset` switch the episode to sequence mode:
    goals advance through the list on success and the episode ends with
    ``max_success`` after the last one.
    """

    def __init__(
        self,
        model: RobotModel,
        tool: ToolSpec,
        env: EnvConfig | None = None,
        control: ControlConfig | None = None,
        reward: RewardConfig | None = None,
        dr: RandomizationConfig | None = None,
        env_index: int = 0,
    ):
        if model.palm is None or len(model.fingertips) != 5:
            raise ValidationError("environment needs a model with a palm and 5 fingertip frames")
        self.model = model
        self.tool = tool
        self.config = env or EnvConfig()
        self.control_config = control or ControlConfig()
        self.reward_config = reward or RewardConfig()
        self.dr = dr or RandomizationConfig()
        self.env_index = env_index
        self.state: EpisodeState | None = None
        self._goals: list[Pose] | None = None
        self._palm_i = model.index[model.palm]
        self._tip_i = [model.index[f] for f in model.fingertips]
        self._inertia_inv = np.linalg.inv(tool.inertia)

    # -- helpers -------------------------------------------------------------

    def _palm_and_tips(self, q) -> tuple[Pose, np.ndarray]:
        T = self.model.link_transforms(q)
        return Pose.from_matrix(T[self._palm_i]), T[self._tip_i, :3, 3]

    def rest_height(self, table_offset: float | None = None) -> float:
        off = self.state.table_offset if table_offset is None else table_offset
        return self.reward_config.z_init + off

    def _on_table(self, xy) -> bool:
        hx, hy = self.config.table_half_extents
        return abs(xy[0]) <= hx and abs(xy[1]) <= hy

    def _dist_to_goal(self, pose: Pose, goal: Pose) -> float:
        return keypoint_distance(pose, goal, REWARD_KEYPOINT_SCALES)

    # -- reset ---------------------------------------------------------------

    def reset(self, seed: int, goals: list[Pose] | None = None):
        cfg = self.config
        self.seed = int(seed)
        rng = {
            tag: derive_rng(self.seed, tag, self.env_index)
            for tag in ("reset", "goal", "delay", "obs_noise", "pose_noise", "wrench", "bbox")
        }
        self._rng = rng
        m = self.model
        table_offset = sample_table_offset(rng["reset"], cfg.table_height_range)
        q = m.clamp(m.default_q + rng["reset"].uniform(-cfg.joint_init_noise, cfg.joint_init_noise, size=m.n_joints))
        xy = rng["reset"].uniform(-cfg.object_xy_range, cfg.object_xy_range, size=2)
        obj = Pose([xy[0], xy[1], self.reward_config.z_init + table_offset], random_rotation(rng["reset"]))

        if goals is not None:
            if len(goals) == 0:
                raise ValidationError("goal sequence is empty")
            self._goals = list(goals)
            goal = self._goals[0]
        else:
            self._goals = None
            goal = sample_initial_goal(rng["goal"], cfg, table_offset)

        dr = self.dr
        if dr.enabled:
            self._obs_q = DelayQueue.sampled(dr.obs_delay_max, rng["delay"])
            self._act_q = DelayQueue.sampled(dr.action_delay_max, rng["delay"])
            self._pose_q = DelayQueue.sampled(dr.object_pose_delay_max, rng["delay"])
            scales = perturb_bbox(self.tool.grasp_box.extents, rng["bbox"], dr.bbox_fraction)
        else:
            self._obs_q, self._act_q, self._pose_q = DelayQueue(0), DelayQueue(0), DelayQueue(0)
            scales = np.array(self.tool.grasp_box.extents, dtype=float)

        control = ControlState.for_model(m, q)
        state = EpisodeState(
            q=q, qd=np.zeros(m.n_joints), object_pose=obj, object_lin_vel=np.zeros(3), object_ang_vel=np.zeros(3),
            attached=False, grab=None, resting=True, goal=goal, goal_index=0, reward=RewardState(), control=control,
            table_offset=table_offset, obs_scales=scales,
        )
        self.state = state
        palm, tips = self._palm_and_tips(q)
        state.palm_pose = palm
        mean_ft = self._mean_fingertip_dist(tips, obj)
        d = self._dist_to_goal(obj, goal)
        state.reward.reset(mean_ft, d)
        state.min_fingertip_dist = mean_ft
        state.min_keypoint_dist = d
        actor = self._actor_obs(tips)
        return actor, self._critic(tips)

    @staticmethod
    def _mean_fingertip_dist(tips: np.ndarray, obj: Pose) -> float:
        return float(np.mean(np.linalg.norm(tips - obj.translation, axis=1)))

    # -- events --------------------------------------------------------------

    def attach(self) -> bool:
        """Grab the object if the palm is within the capture radius of the grasp-box centre."""
        s = self.state
        centre = s.object_pose.apply(self.tool.grasp_box.center)
        if s.attached or np.linalg.norm(s.palm_pose.translation - centre) > self.config.capture_radius:
            return False
        s.grab = compose(invert(s.palm_pose), s.object_pose)
        s.attached = True
        s.resting = False
        return True

    def detach(self) -> bool:
        s = self.state
        if not s.attached:
            return False
        s.attached = False
        s.grab = None
        return True

    def place_object(self, pose: Pose, lin_vel=(0.0, 0.0, 0.0), ang_vel=(0.0, 0.0, 0.0)) -> None:
        """Put the (detached) object at ``pose``; used by tests and scripted set-ups."""
        s = self.state
        s.attached, s.grab = False, None
        s.object_pose = pose
        s.object_lin_vel = np.asarray(lin_vel, dtype=float).copy()
        s.object_ang_vel = np.asarray(ang_vel, dtype=float).copy()
        s.resting = self._on_table(pose.translation) and abs(pose.translation[2] - self.rest_height()) < 1e-12 and not np.any(s.object_lin_vel)

    # -- step ----------------------------------------------------------------

    def step(self, action, event: str | None = None):
        s = self.state
        if s is None:
            raise EpisodeDoneError("call reset() before step()")
        if s.done:
            raise EpisodeDoneError(f"episode ended ({s.termination}); call reset()")
        cfg = self.config
        events: list[str] = []
        if event == "attach":
            events.append("attach" if self.attach() else "attach_rejected")
        elif event == "detach":
            if self.detach():
                events.append("detach")
        elif event is not None:
            raise ValidationError(f"unknown event {event!r}")

        action = np.asarray(action, dtype=float)
        if action.shape != (self.model.n_joints,):
            raise ValidationError(f"action must have length {self.model.n_joints}")
        delayed_action = self._act_q.push_pop(action.copy())
        q_prev = s.q
        palm_prev = s.palm_pose
        obj_prev = s.object_pose
        q_target = process_action(delayed_action, s.control, self.control_config)

        wrench = None
        if self.dr.enabled and self.dr.wrench_probability > 0 and self._rng["wrench"].random() < self.dr.wrench_probability:
            wrench = sample_wrench(self._rng["wrench"], self.dr)
            events.append("wrench")

        max_force = 0.0
        n = cfg.substeps
        tips = None
        for k in range(1, n + 1):
            q_k = q_prev + (q_target - q_prev) * (k / n)
            palm, tips = self._palm_and_tips(q_k)
            penetration = (cfg.table_z + s.table_offset) - palm.translation[2]
            max_force = max(max_force, cfg.table_stiffness * max(penetration, 0.0))
            if s.attached:
                s.object_pose = compose(palm, s.grab)
            elif not s.resting:
                self._free_substep(wrench if k == 1 else None)
            s.palm_pose = palm
        s.q = q_target.copy()
        s.qd = (q_target - q_prev) * cfg.control_hz
        s.table_force = max_force
        s.step += 1

        dt = cfg.control_dt
        s.palm_lin_vel = (s.palm_pose.translation - palm_prev.translation) / dt
        s.palm_ang_vel = quat_to_rotvec(quat_mul(s.palm_pose.rotation, quat_conj(palm_prev.rotation))) / dt
        if s.attached or s.resting:
            s.object_lin_vel = (s.object_pose.translation - obj_prev.translation) / dt
            s.object_ang_vel = quat_to_rotvec(quat_mul(s.object_pose.rotation, quat_conj(obj_prev.rotation))) / dt

        # reward, heights measured against the nominal table
        obj = s.object_pose
        d = self._dist_to_goal(obj, s.goal)
        mean_ft = self._mean_fingertip_dist(tips, obj)
        was_grasped = s.reward.grasped
        terms = total_reward(
            s.qd[: self.model.n_arm], s.qd[self.model.n_arm :], mean_ft, obj.translation[2] - s.table_offset, d,
            s.reward, self.reward_config,
        )
        s.last_reward = terms.total
        s.min_fingertip_dist = min(s.min_fingertip_dist, mean_ft)
        s.min_keypoint_dist = min(s.min_keypoint_dist, d)
        if terms.lifted_event:
            events.append("lifted")
        if s.reward.grasped and not was_grasped:
            events.append("grasped")
        d_star_logged = s.reward.d_star
        sequence_done = False
        if terms.success:
            events.append("success")
            if self._goals is not None:
                s.goal_index += 1
                if s.goal_index >= len(self._goals):
                    sequence_done = True
                else:
                    s.goal = self._goals[s.goal_index]
            else:
                s.goal_index += 1
                s.goal = sample_next_goal(s.goal, self._rng["goal"], cfg, s.table_offset)
            if not sequence_done:
                s.reward.new_goal(self._dist_to_goal(obj, s.goal))

        s.termination = check_termination(s, cfg, self.reward_config, sequence_done=sequence_done)
        s.done = s.termination != "running"
        actor = self._actor_obs(tips)
        critic = self._critic(tips)
        info = {
            "events": events,
            "terms": terms,
            "d": d,
            "d_star": d_star_logged,
            "termination": s.termination,
            "success_count": s.reward.success_count,
            "goal_index": s.goal_index,
        }
        return actor, critic, terms.total, s.done, info

    def _free_substep(self, wrench) -> None:
        s, cfg = self.state, self.config
        dt = cfg.sim_dt
        pose = s.object_pose
        if wrench is not None:
            force, torque = wrench
            R = pose.matrix
            s.object_lin_vel = s.object_lin_vel + force / self.tool.mass * cfg.control_dt
            s.object_ang_vel = s.object_ang_vel + R @ self._inertia_inv @ R.T @ torque * cfg.control_dt
        pos, vel = ballistic_substep(pose.translation, s.object_lin_vel, dt, cfg.gravity)
        rot = quat_mul(quat_from_rotvec(s.object_ang_vel * dt), pose.rotation)
        rest = self.rest_height()
        if self._on_table(pos) and pos[2] <= rest and pose.translation[2] >= rest:
            pos = np.array([pos[0], pos[1], rest])
            vel = np.zeros(3)
            s.object_ang_vel = np.zeros(3)
            s.resting = True
        s.object_pose = Pose(pos, rot)
        s.object_lin_vel = vel

    # -- observations --------------------------------------------------------

    def _obs_fields(self, q, qd, prev, palm: Pose, tips, obj: Pose, scales) -> ActorObservation:
        offsets = keypoint_offsets(scales)
        kp = obj.apply(offsets)
        kg = self.state.goal.apply(offsets)
        return ActorObservation(
            q=np.array(q), qd=np.array(qd), prev_target=np.array(prev),
            palm_pos=palm.translation.copy(), palm_quat=palm.rotation.copy(),
            fingertips_rel=tips - palm.translation, object_quat=obj.rotation.copy(),
            keypoints_rel=kp - palm.translation, keypoint_errors=kp - kg, scales=np.array(scales),
        )

    def _actor_obs(self, tips) -> ActorObservation:
        s, dr = self.state, self.dr
        qd = s.qd
        obj = s.object_pose
        if dr.enabled:
            if dr.joint_vel_noise > 0:
                qd = qd + self._rng["obs_noise"].normal(0.0, dr.joint_vel_noise, size=qd.shape)
            obj = perturb_pose(obj, dr.object_pos_noise, dr.object_rot_noise, self._rng["pose_noise"])
        proprio = self._obs_q.push_pop((s.q.copy(), qd.copy(), s.control.prev_target.copy(), s.palm_pose, tips.copy()))
        obj = self._pose_q.push_pop(obj)
        q, qd, prev, palm, tips_d = proprio
        return self._obs_fields(q, qd, prev, palm, tips_d, obj, s.obs_scales)

    def _critic(self, tips) -> CriticState:
        s = self.state
        clean = self._obs_fields(
            s.q, s.qd, s.control.prev_target, s.palm_pose, tips, s.object_pose, self.tool.grasp_box.extents
        )
        return CriticState(
            clean=clean, palm_lin_vel=s.palm_lin_vel.copy(), palm_ang_vel=s.palm_ang_vel.copy(),
            object_lin_vel=s.object_lin_vel.copy(), object_ang_vel=s.object_ang_vel.copy(), reward=s.last_reward,
            success_count=s.reward.success_count, min_fingertip_dist=s.min_fingertip_dist,
            min_keypoint_dist=s.min_keypoint_dist, steps=s.step, grasped=s.reward.grasped,
            object_pose=s.object_pose, goal_pose=s.goal, attached=s.attached, grab=s.grab,
        )


def check_termination(state: EpisodeState, config: EnvConfig, reward: RewardConfig, sequence_done: bool = False) -> str:
    """First matching condition in the order of ``TERMINATIONS``."""
    z = state.object_pose.translation[2]
    table = config.table_z + state.table_offset
    if z < table:
        return "fallen"
    if state.reward.grasped and z - state.table_offset < reward.z_init:
        return "dropped"
    if state.palm_pose is not None and np.linalg.norm(state.palm_pose.translation - state.object_pose.translation) > config.hand_wander_limit:
        return "wander"
    if state.table_force > config.table_force_limit:
        return "force"
    if state.step >= config.episode_length:
        return "timeout"
    if sequence_done or state.reward.success_count >= config.max_consecutive_successes:
        return "max_success"
    return "running"
