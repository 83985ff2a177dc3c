"""Inverse kinematics and fixed-grasp trajectory planning.

* ``dls_step`` is the damped least-squares update ``J^T (J J^T + mu^2 I)^-1 e``.
* ``solve_ik`` iterates it with joint-limit clipping and step halving.
* ``optimize_trajectory`` refines an N-waypoint joint path with
  Levenberg-Marquardt; joint limits and table/wall collisions of the
  robot's collision spheres enter as weighted hinge residuals.

Pose errors are ``[t_target - t, rotvec(R_target R^T)]`` (metres, radians).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import Pose, compose, invert, matrix_to_quat, quat_conj, quat_from_axis_angle, quat_mul, quat_to_rotvec
from .robot import RobotModel

DEFAULT_DAMPING = 0.05


def pose_error(current: Pose, target: Pose) -> np.ndarray:
    dt = target.translation - current.translation
    dr = quat_to_rotvec(quat_mul(target.rotation, quat_conj(current.rotation)))
    return np.concatenate([dt, dr])


def _pose_error_matrix(M: np.ndarray, target: Pose) -> np.ndarray:
    return pose_error(Pose.from_matrix(M), target)


def dls_step(J, e, mu: float = DEFAULT_DAMPING) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    e = np.asarray(e, dtype=float)
    if not (np.all(np.isfinite(J)) and np.all(np.isfinite(e))):
        raise ValidationError("dls_step inputs must be finite")
    if not mu > 0:
        raise ValidationError("damping must be positive")
    m = J.shape[0]
    A = J @ J.T + (mu * mu) * np.eye(m)
    return J.T @ np.linalg.solve(A, e)


@dataclass
class IKResult:
    q: np.ndarray
    error: np.ndarray
    converged: bool
    iterations: int

    @property
    def position_error(self) -> float:
        return float(np.linalg.norm(self.error[:3]))

    @property
    def rotation_error(self) -> float:
        return float(np.linalg.norm(self.error[3:]))


def _arm_joints(model: RobotModel) -> np.ndarray:
    return np.arange(model.n_arm)


def solve_ik(
    model: RobotModel,
    frame: str,
    target: Pose,
    q0,
    mu: float = DEFAULT_DAMPING,
    iters: int = 300,
    tol: float = 1e-5,
    joints=None,
    position_only: bool = False,
    restarts: int = 0,
    rng: np.random.Generator | None = None,
) -> IKResult:
    """Iterated DLS with clipping; halves the step whenever the error grows.

    Convergence means ``||e|| < tol`` (position-only: ``||e_t|| < tol``).
    Non-convergence is reported in the result, never raised. With
    ``restarts`` > 0, failed solves are retried from random joint vectors
    drawn from ``rng`` and the best result is returned; restarted attempts
    give up early once progress stalls.
    """
    joints = _arm_joints(model) if joints is None else np.asarray(joints, dtype=int)
    best = _solve_ik_once(model, frame, target, np.asarray(q0, dtype=float), mu, iters, tol, joints, position_only)
    if best.converged or restarts <= 0:
        return best
    rng = rng or np.random.default_rng(0)
    rows = slice(0, 3) if position_only else slice(0, 6)
    for _ in range(restarts):
        q_start = np.array(best.q)
        q_start[joints] = rng.uniform(model.lower[joints], model.upper[joints])
        res = _solve_ik_once(model, frame, target, q_start, mu, iters, tol, joints, position_only, stall=True)
        if np.linalg.norm(res.error[rows]) < np.linalg.norm(best.error[rows]):
            best = res
        if best.converged:
            break
    return best


def _solve_ik_once(model, frame, target, q0, mu, iters, tol, joints, position_only, stall=False) -> IKResult:
    q = model.clamp(q0)
    rows = slice(0, 3) if position_only else slice(0, 6)
    T = model.link_transforms(q)
    e = _pose_error_matrix(model.frame_matrix(q, frame, T), target)
    err = np.linalg.norm(e[rows])
    it = 0
    history = [err]
    while err >= tol and it < iters:
        it += 1
        # stalled in a local minimum: less than 2x improvement in 20 iterations
        if stall and it > 20 and err > 0.5 * history[-20]:
            break
        J = model.jacobian(q, frame, transforms=T)[rows][:, joints]
        dq = projected_dls_step(J, e[rows], mu, q[joints], model.lower[joints], model.upper[joints])
        step = 1.0
        accepted = False
        for _ in range(12):
            q_try = q.copy()
            q_try[joints] = q[joints] + step * dq
            q_try = model.clamp(q_try)
            T_try = model.link_transforms(q_try)
            e_try = _pose_error_matrix(model.frame_matrix(q_try, frame, T_try), target)
            err_try = np.linalg.norm(e_try[rows])
            if err_try <= err:
                q, T, e, err = q_try, T_try, e_try, err_try
                history.append(err)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return IKResult(q, e if not position_only else np.concatenate([e[:3], np.zeros(3)]), bool(err < tol), it)


def projected_dls_step(J, e, mu, q, lo, hi, rounds: int = 3) -> np.ndarray:
    """DLS step with joints pinned at a limit (and pushed outward) frozen."""
    free = np.ones(len(q), dtype=bool)
    dq = np.zeros(len(q))
    for _ in range(rounds):
        dq = np.zeros(len(q))
        if not free.any():
            break
        dq[free] = dls_step(J[:, free], e, mu)
        blocked = free & (((q <= lo + 1e-9) & (dq < 0)) | ((q >= hi - 1e-9) & (dq > 0)))
        if not blocked.any():
            break
        free &= ~blocked
    return dq


def fixed_grasp_targets(grab: Pose, object_goals) -> list[Pose]:
    """End-effector targets ``T_BE = T_BO * T_EO^-1`` for a rigid grasp ``T_EO``."""
    inv = invert(grab)
    return [compose(g, inv) for g in object_goals]


@dataclass(frozen=True)
class Plane:
    """Half-space obstacle; the free side is ``normal . x >= offset``."""

    normal: tuple[float, float, float]
    offset: float
    name: str = "plane"

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        return points @ n - self.offset


def table_plane(z: float = 0.6) -> Plane:
    return Plane((0.0, 0.0, 1.0), z, "table")


@dataclass
class TrajOptProblem:
    targets: list[Pose]
    frame: str | None = None
    joints: np.ndarray | None = None
    w_position: float = 1.0
    w_rotation: float = 0.3
    w_smooth: float = 0.05
    w_limit: float = 10.0
    w_collision: float = 30.0
    collision_activation: float = 0.02  # m; hinge starts this far from contact
    obstacles: list[Plane] = field(default_factory=lambda: [table_plane()])
    max_iters: int = 200
    tol: float = 1e-10

    def __post_init__(self):
        if len(self.targets) < 1:
            raise ValidationError("trajectory needs at least one target")
        for name in ("w_position", "w_rotation", "w_smooth", "w_limit", "w_collision"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")


@dataclass
class PlanReport:
    position_errors: list[float]
    rotation_errors: list[float]
    min_collision_margin: float
    iterations: int = 0
    cost_history: list[float] = field(default_factory=list)
    converged: bool = False
    mode: str = "trajopt"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "waypoints": len(self.position_errors),
            "position_errors_m": [float(v) for v in self.position_errors],
            "rotation_errors_rad": [float(v) for v in self.rotation_errors],
            "max_position_error_m": float(max(self.position_errors)),
            "max_rotation_error_rad": float(max(self.rotation_errors)),
            "min_collision_margin_m": float(self.min_collision_margin),
            "iterations": self.iterations,
            "converged": self.converged,
            "cost_history": [float(c) for c in self.cost_history],
        }


def collision_margins(model: RobotModel, q, obstacles, transforms=None) -> np.ndarray:
    """(n_spheres, n_obstacles) signed clearance of each sphere surface."""
    if not model.collision_spheres or not obstacles:
        return np.full((0, 0), np.inf)
    centers = model.sphere_centers(q, transforms)
    radii = np.array([s.radius for s in model.collision_spheres])
    return np.column_stack([p.signed_distance(centers) - radii for p in obstacles])


def evaluate_plan(model: RobotModel, qs, targets, frame: str | None = None, obstacles=(), mode: str = "plan") -> PlanReport:
    frame = frame or model.end_effector
    pos, rot, margin = [], [], math.inf
    for q, tgt in zip(qs, targets):
        T = model.link_transforms(q)
        e = _pose_error_matrix(model.frame_matrix(q, frame, T), tgt)
        pos.append(float(np.linalg.norm(e[:3])))
        rot.append(float(np.linalg.norm(e[3:])))
        m = collision_margins(model, q, obstacles, T)
        if m.size:
            margin = min(margin, float(m.min()))
    return PlanReport(pos, rot, margin, mode=mode)


def sequential_ik(model: RobotModel, targets, q0, frame: str | None = None, mu: float = DEFAULT_DAMPING,
                  iters: int = 300, tol: float = 1e-5, joints=None) -> list[np.ndarray]:
    """Solve each waypoint seeded by the previous solution (collision-unaware)."""
    frame = frame or model.end_effector
    q = np.asarray(q0, dtype=float)
    out = []
    for tgt in targets:
        q = solve_ik(model, frame, tgt, q, mu=mu, iters=iters, tol=tol, joints=joints).q
        out.append(q.copy())
    return out


class _TrajResiduals:
    def __init__(self, problem: TrajOptProblem, model: RobotModel, q_fixed: np.ndarray):
        self.p = problem
        self.model = model
        self.frame = problem.frame or model.end_effector
        self.joints = _arm_joints(model) if problem.joints is None else np.asarray(problem.joints, dtype=int)
        self.q_fixed = np.asarray(q_fixed, dtype=float)
        self.N = len(problem.targets)
        self.n = len(self.joints)
        self.w_pose = np.array([problem.w_position] * 3 + [problem.w_rotation] * 3)
        self.lower = model.lower[self.joints]
        self.upper = model.upper[self.joints]

    def full_q(self, x_i: np.ndarray) -> np.ndarray:
        q = self.q_fixed.copy()
        q[self.joints] = x_i
        return q

    def __call__(self, x: np.ndarray, with_jac: bool = True):
        p, m = self.p, self.model
        N, n = self.N, self.n
        X = x.reshape(N, n)
        res, rows = [], []
        n_var = N * n
        for i in range(N):
            q = self.full_q(X[i])
            T = m.link_transforms(q)
            e = _pose_error_matrix(m.frame_matrix(q, self.frame, T), p.targets[i])
            res.append(self.w_pose * e)
            if with_jac:
                Jrow = np.zeros((6, n_var))
                Jrow[:, i * n : (i + 1) * n] = -self.w_pose[:, None] * m.jacobian(q, self.frame, transforms=T)[:, self.joints]
                rows.append(Jrow)
            # collision hinge
            for k, sph in enumerate(m.collision_spheres):
                Tl = T[m.index[sph.link]]
                c = Tl[:3, :3] @ sph.center + Tl[:3, 3]
                for plane in p.obstacles:
                    dist = float(plane.signed_distance(c[None])[0]) - sph.radius
                    h = p.collision_activation - dist
                    if h > 0:
                        res.append(np.array([p.w_collision * h]))
                        if with_jac:
                            nrm = np.asarray(plane.normal, dtype=float)
                            nrm = nrm / np.linalg.norm(nrm)
                            Jp = m.jacobian(q, sph.link, point=sph.center, transforms=T)[:3, self.joints]
                            Jrow = np.zeros((1, n_var))
                            Jrow[0, i * n : (i + 1) * n] = -p.w_collision * (nrm @ Jp)
                            rows.append(Jrow)
        if N > 1 and p.w_smooth > 0:
            D = (X[1:] - X[:-1]).ravel()
            res.append(p.w_smooth * D)
            if with_jac:
                Js = np.zeros(((N - 1) * n, n_var))
                for i in range(N - 1):
                    blk = slice(i * n, (i + 1) * n)
                    Js[blk, i * n : (i + 1) * n] = -p.w_smooth * np.eye(n)
                    Js[blk, (i + 1) * n : (i + 2) * n] = p.w_smooth * np.eye(n)
                rows.append(Js)
        over = np.maximum(X - self.upper, 0.0).ravel()
        under = np.maximum(self.lower - X, 0.0).ravel()
        res.append(p.w_limit * over)
        res.append(p.w_limit * under)
        if with_jac:
            rows.append(np.diag(p.w_limit * (over > 0).astype(float)))
            rows.append(np.diag(-p.w_limit * (under > 0).astype(float)))
        r = np.concatenate(res)
        return (r, np.vstack(rows)) if with_jac else r


def optimize_trajectory(
    problem: TrajOptProblem,
    model: RobotModel,
    warm_start,
    q_fixed=None,
) -> tuple[list[np.ndarray], PlanReport]:
    """Levenberg-Marquardt over all waypoints jointly.

    ``warm_start`` is a list of N full joint vectors (normally from
    :func:`sequential_ik`); joints outside ``problem.joints`` stay at their
    warm-start values. Only cost-decreasing steps are accepted, so the cost
    history is non-increasing. Output joints are hard-clipped to limits.
    """
    warm = [np.asarray(q, dtype=float) for q in warm_start]
    if len(warm) != len(problem.targets):
        raise ValidationError("warm start must have one configuration per target")
    fn = _TrajResiduals(problem, model, warm[0] if q_fixed is None else q_fixed)
    x = np.concatenate([q[fn.joints] for q in warm])
    r, J = fn(x)
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, problem.max_iters + 1):
        g = J.T @ r
        H = J.T @ J
        improved = False
        for _ in range(20):
            A = H + lam * (np.diag(np.diag(H)) + 1e-9 * np.eye(len(x)))
            try:
                delta = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + delta
            r_new = fn(x_new, with_jac=False)
            cost_new = 0.5 * float(r_new @ r_new)
            if cost_new < cost:
                rel = (cost - cost_new) / max(cost, 1e-300)
                x, cost = x_new, cost_new
                r, J = fn(x)
                history.append(cost)
                lam = max(lam / 3.0, 1e-9)
                improved = True
                if rel < problem.tol or cost < problem.tol:
                    converged = True
                break
            lam *= 4.0
        if not improved or converged:
            converged = converged or not improved
            break
    X = np.clip(x.reshape(fn.N, fn.n), fn.lower, fn.upper)
    qs = [fn.full_q(xi) for xi in X]
    report = evaluate_plan(model, qs, problem.targets, fn.frame, problem.obstacles, mode="trajopt")
    report.iterations = it
    report.cost_history = history
    report.converged = converged
    return qs, report


@dataclass
class RetargetResult:
    q_hand: np.ndarray
    residuals: np.ndarray  # per-fingertip distance (m)
    converged: bool
    iterations: int


def fingertip_retarget(
    model: RobotModel,
    palm_pose: Pose,
    fingertip_targets,
    q_hand0,
    mu: float = 0.01,
    iters: int = 500,
    tol: float = 1e-4,
    q_arm=None,
) -> RetargetResult:
    """Solve the hand joints so fingertips reach world-frame targets.

    Works in the palm frame, so the arm configuration does not matter.
    Joints pinned at a limit with the update pushing outward are frozen for
    that iteration (projected DLS).
    """
    targets = np.asarray(fingertip_targets, dtype=float).reshape(len(model.fingertips), 3)
    local_targets = invert(palm_pose).apply(targets)
    hand = np.arange(model.n_arm, model.n_joints)
    q = np.array(model.default_q if q_arm is None else np.concatenate([q_arm, np.zeros(model.n_hand)]), dtype=float)
    q[hand] = np.clip(np.asarray(q_hand0, dtype=float), model.lower[hand], model.upper[hand])
    lo, hi = model.lower[hand], model.upper[hand]

    def tips_local(qv):
        T = model.link_transforms(qv)
        P = T[model.index[model.palm]]
        R = P[:3, :3]
        pts = np.array([T[model.index[f]][:3, 3] for f in model.fingertips])
        return (pts - P[:3, 3]) @ R, R, T

    pts, R, T = tips_local(q)
    res = (local_targets - pts).ravel()
    err = float(res @ res)
    it = 0
    for it in range(1, iters + 1):
        if np.max(np.linalg.norm(res.reshape(-1, 3), axis=1)) < tol:
            break
        J = np.vstack([R.T @ model.jacobian(q, f, transforms=T)[:3, hand] for f in model.fingertips])
        qh = q[hand]
        dq = projected_dls_step(J, res, mu, qh, lo, hi)
        step = 1.0
        accepted = False
        for _ in range(12):
            q_try = q.copy()
            q_try[hand] = np.clip(qh + step * dq, lo, hi)
            p_try, R_try, T_try = tips_local(q_try)
            r_try = (local_targets - p_try).ravel()
            e_try = float(r_try @ r_try)
            if e_try < err:
                q, pts, R, T, res, err = q_try, p_try, R_try, T_try, r_try, e_try
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    per_tip = np.linalg.norm(res.reshape(-1, 3), axis=1)
    return RetargetResult(q[hand].copy(), per_tip, bool(per_tip.max() < tol), it)


def kinematic_retarget(model: RobotModel, palm_target: Pose, fingertip_targets, q0, mu: float = DEFAULT_DAMPING):
    """Two-stage retargeting: arm DLS places the palm, then the fingers are solved."""
    arm = solve_ik(model, model.palm, palm_target, q0, mu=mu)
    palm = model.frame_pose(arm.q, model.palm)
    hand = fingertip_retarget(model, palm, fingertip_targets, arm.q[model.n_arm :], q_arm=arm.q[: model.n_arm])
    q = arm.q.copy()
    q[model.n_arm :] = hand.q_hand
    return q, arm, hand


def table_rotation_fixture(n_waypoints: int = 10) -> tuple[Pose, list[Pose]]:
    """Grasp and object goals for a 90 degree roll that ends next to the table.

    The tool is held 6 cm off the palm with its long axis along the palm y
    axis. At the start the palm faces +x with the fingers pointing away from
    the robot; the tool then rolls about -y while descending, which moves
    the palm from beside the tool to underneath it. Under a rigid grasp the
    last waypoints put the palm spheres through the table at z = 0.6.
    """
    if n_waypoints < 2:
        raise ValidationError("fixture needs at least two waypoints")
    grab = Pose([0.06, 0.0, 0.0], quat_from_axis_angle([0.0, 0.0, 1.0], math.pi / 2))
    palm0 = matrix_to_quat(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]))
    start, end = np.array([0.0, -0.1, 0.80]), np.array([0.0, -0.1, 0.665])
    goals = []
    for k in range(n_waypoints):
        s = k / (n_waypoints - 1)
        q = quat_mul(quat_from_axis_angle([0.0, -1.0, 0.0], s * math.pi / 2), palm0)
        normal = Pose(np.zeros(3), q).matrix[:3, 0]
        palm = Pose((1 - s) * start + s * end - grab.translation[0] * normal, q)
        goals.append(compose(palm, grab))
    return grab, goals
