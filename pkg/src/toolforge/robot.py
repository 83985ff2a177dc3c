"""Kinematic tree loaded from a JSON chain description.

Schema (all lengths in metres, angles in radians)::

    {
      "name": "...",
      "base": "world",                      # name of the implicit root
      "links": [                            # any order; must form a tree
        {"name": "link1", "parent": "world",
         "fixed_transform": [tx, ty, tz, qw, qx, qy, qz],
         "type": "revolute" | "fixed",
         "axis": [ax, ay, az],              # revolute only, joint frame
         "limits": [lower, upper],          # revolute only
         "abduction": false}                # optional, see limit shrink
      ],
      "n_arm": 7,                           # first n_arm joints are the arm
      "frames": {"palm": "...", "end_effector": "...", "fingertips": [...]},
      "abduction_limit_scale": 0.8,         # shrink factor about mid-range
      "default_q": [...],                   # optional, length J
      "collision_spheres": [{"link": "...", "center": [x, y, z], "radius": r}]
    }

A link's world transform is ``T_parent @ fixed_transform @ Rot(axis, q)``.
Joint order in ``q`` is the order revolute links appear in ``links``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import Pose

JOINT_TYPES = ("revolute", "fixed")


@dataclass(frozen=True)
class CollisionSphere:
    link: str
    center: np.ndarray
    radius: float


def _batch_axis_rotation(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    C = 1.0 - c
    x, y, z = axes[:, 0], axes[:, 1], axes[:, 2]
    R = np.empty((len(angles), 3, 3))
    R[:, 0, 0] = c + x * x * C
    R[:, 0, 1] = x * y * C - z * s
    R[:, 0, 2] = x * z * C + y * s
    R[:, 1, 0] = y * x * C + z * s
    R[:, 1, 1] = c + y * y * C
    R[:, 1, 2] = y * z * C - x * s
    R[:, 2, 0] = z * x * C - y * s
    R[:, 2, 1] = z * y * C + x * s
    R[:, 2, 2] = c + z * z * C
    return R


class RobotModel:
    """Immutable kinematic tree with forward kinematics and geometric Jacobians."""

    def __init__(self, desc: dict):
        self.desc = desc
        self.name = desc.get("name", "robot")
        self.base = desc.get("base", "world")
        links = desc.get("links")
        if not isinstance(links, list) or not links:
            raise ValidationError("links must be a non-empty list")
        names = [lk.get("name") for lk in links]
        seen: set[str] = set()
        for n in names:
            if not isinstance(n, str) or not n:
                raise ValidationError("every link needs a non-empty name")
            if n in seen or n == self.base:
                raise ValidationError(f"duplicate frame name {n!r}")
            seen.add(n)
        by_name = {lk["name"]: lk for lk in links}

        # Topological order from the base; anything unreached is a cycle or orphan.
        children: dict[str, list[str]] = {}
        for lk in links:
            children.setdefault(lk.get("parent"), []).append(lk["name"])
        order: list[str] = []
        stack = list(reversed(children.get(self.base, [])))
        while stack:
            n = stack.pop()
            order.append(n)
            stack.extend(reversed(children.get(n, [])))
        if len(order) != len(links):
            stray = sorted(set(names) - set(order))
            raise ValidationError(f"links not reachable from base {self.base!r} (cycle or unknown parent): {stray}")
        # Keep file order for joint indexing but evaluate in topological order.
        self.link_names: tuple[str, ...] = tuple(order)
        self.index = {n: i for i, n in enumerate(order)}

        joint_links = [lk["name"] for lk in links if lk.get("type", "fixed") == "revolute"]
        self.joint_names: tuple[str, ...] = tuple(joint_links)
        joint_index = {n: i for i, n in enumerate(joint_links)}
        shrink = float(desc.get("abduction_limit_scale", 1.0))
        if not 0 < shrink <= 1:
            raise ValidationError("abduction_limit_scale must be in (0, 1]")

        n_nodes = len(order)
        self._parent = np.full(n_nodes, -1, dtype=int)
        self._fixed = np.zeros((n_nodes, 4, 4))
        self._axis = np.zeros((n_nodes, 3))
        self._joint = np.full(n_nodes, -1, dtype=int)
        lower, upper = np.zeros(len(joint_links)), np.zeros(len(joint_links))
        self.abduction = np.zeros(len(joint_links), dtype=bool)
        for i, n in enumerate(order):
            lk = by_name[n]
            jtype = lk.get("type", "fixed")
            if jtype not in JOINT_TYPES:
                raise ValidationError(f"{n}: type must be one of {JOINT_TYPES}")
            parent = lk.get("parent")
            self._parent[i] = -1 if parent == self.base else self.index[parent]
            try:
                self._fixed[i] = Pose.from_list(lk.get("fixed_transform", [0, 0, 0, 1, 0, 0, 0])).as_matrix()
            except ValidationError as exc:
                raise ValidationError(f"{n}.fixed_transform: {exc}") from exc
            if jtype == "revolute":
                axis = np.asarray(lk.get("axis", [0, 0, 1]), dtype=float)
                if axis.shape != (3,) or np.linalg.norm(axis) < 1e-9:
                    raise ValidationError(f"{n}.axis must be a non-zero 3-vector")
                self._axis[i] = axis / np.linalg.norm(axis)
                j = joint_index[n]
                self._joint[i] = j
                lim = lk.get("limits")
                if lim is None or len(lim) != 2:
                    raise ValidationError(f"{n}.limits must be [lower, upper]")
                lo, hi = float(lim[0]), float(lim[1])
                if not lo < hi:
                    raise ValidationError(f"{n}.limits: lower {lo} must be below upper {hi}")
                if lk.get("abduction", False):
                    self.abduction[j] = True
                    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * shrink
                    lo, hi = mid - half, mid + half
                lower[j], upper[j] = lo, hi
        self.lower, self.upper = lower, upper
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

        self.n_joints = len(joint_links)
        self.n_arm = int(desc.get("n_arm", self.n_joints))
        if not 0 <= self.n_arm <= self.n_joints:
            raise ValidationError("n_arm exceeds the joint count")
        self.n_hand = self.n_joints - self.n_arm

        frames = desc.get("frames", {})
        self.palm = frames.get("palm")
        self.end_effector = frames.get("end_effector", self.palm or order[-1])
        self.fingertips: tuple[str, ...] = tuple(frames.get("fingertips", ()))
        for f in [self.palm, self.end_effector, *self.fingertips]:
            if f is not None and f not in self.index:
                raise ValidationError(f"named frame {f!r} is not a link")

        dq = desc.get("default_q")
        self.default_q = self.clamp(np.zeros(self.n_joints) if dq is None else np.asarray(dq, dtype=float))
        if self.default_q.shape != (self.n_joints,):
            raise ValidationError(f"default_q must have length {self.n_joints}")
        self.default_q.setflags(write=False)

        spheres = []
        for k, sp in enumerate(desc.get("collision_spheres", [])):
            if sp.get("link") not in self.index:
                raise ValidationError(f"collision_spheres[{k}].link {sp.get('link')!r} is not a link")
            r = float(sp.get("radius", 0))
            if r <= 0:
                raise ValidationError(f"collision_spheres[{k}].radius must be positive")
            spheres.append(CollisionSphere(sp["link"], np.asarray(sp.get("center", [0, 0, 0]), dtype=float), r))
        self.collision_spheres: tuple[CollisionSphere, ...] = tuple(spheres)

        self._rev_nodes = np.flatnonzero(self._joint >= 0)
        depth = np.zeros(n_nodes, dtype=int)
        for i in range(n_nodes):
            if self._parent[i] >= 0:
                depth[i] = depth[self._parent[i]] + 1
        self._levels = [
            (np.flatnonzero(depth == d), self._parent[depth == d]) for d in range(1, int(depth.max()) + 1)
        ]

        # Joints on the path from base to each node, for Jacobians.
        self._ancestors: list[np.ndarray] = []
        for i in range(n_nodes):
            path = []
            k = i
            while k >= 0:
                if self._joint[k] >= 0:
                    path.append(k)
                k = self._parent[k]
            self._ancestors.append(np.array(path[::-1], dtype=int))

    # -- basic helpers -----------------------------------------------------

    @property
    def arm_slice(self) -> slice:
        return slice(0, self.n_arm)

    @property
    def hand_slice(self) -> slice:
        return slice(self.n_arm, self.n_joints)

    def clamp(self, q) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.lower, self.upper)

    def _check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_joints,):
            raise ValidationError(f"q has length {q.shape}, model expects {self.n_joints}")
        if not np.all(np.isfinite(q)):
            raise ValidationError("q contains non-finite values")
        return q

    # -- kinematics --------------------------------------------------------

    def link_transforms(self, q) -> np.ndarray:
        """(n_links, 4, 4) world transforms of every link, topological order."""
        q = self._check_q(q)
        local = self._fixed.copy()
        rj = self._rev_nodes
        if len(rj):
            local[rj, :3, :3] = local[rj, :3, :3] @ _batch_axis_rotation(self._axis[rj], q[self._joint[rj]])
        T = local
        # tree depth levels evaluated as batched matmuls; roots are already world frames
        for nodes, parents in self._levels:
            T[nodes] = T[parents] @ local[nodes]
        return T

    def frame_matrix(self, q, frame: str, transforms: np.ndarray | None = None) -> np.ndarray:
        T = self.link_transforms(q) if transforms is None else transforms
        return T[self.index[frame]]

    def forward_kinematics(self, q) -> dict[str, Pose]:
        T = self.link_transforms(q)
        return {n: Pose.from_matrix(T[i]) for n, i in self.index.items()}

    def frame_pose(self, q, frame: str) -> Pose:
        return Pose.from_matrix(self.frame_matrix(q, frame))

    def jacobian(self, q, frame: str, point=None, transforms: np.ndarray | None = None) -> np.ndarray:
        """6 x J geometric Jacobian (linear rows then angular) in the world frame.

        ``point`` is an optional offset in the frame's local coordinates; the
        linear rows then describe that point's velocity.
        """
        if frame not in self.index:
            raise ValidationError(f"unknown frame {frame!r}")
        T = self.link_transforms(q) if transforms is None else transforms
        i = self.index[frame]
        p = T[i][:3, 3] if point is None else T[i][:3, :3] @ np.asarray(point, dtype=float) + T[i][:3, 3]
        J = np.zeros((6, self.n_joints))
        anc = self._ancestors[i]
        if len(anc):
            # axis is expressed after the joint's own rotation, which leaves it invariant
            a = np.einsum("kij,kj->ki", T[anc, :3, :3], self._axis[anc])
            cols = self._joint[anc]
            J[:3, cols] = np.cross(a, p - T[anc, :3, 3]).T
            J[3:, cols] = a.T
        return J

    def sphere_centers(self, q, transforms: np.ndarray | None = None) -> np.ndarray:
        T = self.link_transforms(q) if transforms is None else transforms
        return np.array([T[self.index[s.link]][:3, :3] @ s.center + T[self.index[s.link]][:3, 3] for s in self.collision_spheres]).reshape(-1, 3)


def load_model(source) -> RobotModel:
    """Load a chain description from a path, a JSON string path, or a dict."""
    if isinstance(source, dict):
        return RobotModel(source)
    path = Path(source)
    text = path.read_text()
    try:
        desc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return RobotModel(desc)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def bundled_model_path(name: str = "default_robot") -> Path:
    return Path(str(resources.files("toolforge") / "data" / f"{name}.json"))


def default_model() -> RobotModel:
    """Bundled 29-DoF arm + hand model (7 arm joints, 22 hand joints)."""
    return load_model(bundled_model_path("default_robot"))


def planar_two_link() -> RobotModel:
    """Two revolute joints about z, 1 m links along x; tip frame ``tip``."""
    return load_model(bundled_model_path("planar2"))
