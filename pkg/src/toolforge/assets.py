"""Procedural handle-head tools: sampling, mass properties, grasp boxes, files.

The object frame is the handle frame: origin at the handle centroid, +x
along the handle toward the head. The head is centred on the handle tip
(``x = +L_handle / 2``) with its long axis along object +y.

Parts overlap where the head meets the handle; mass properties are the sum
of the two solids (densities superpose in the overlap), so
``mass == handle.mass + head.mass`` holds exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import ParseError, ValidationError
from .geometry import Pose, quat_from_axis_angle

SHAPES = ("cuboid", "capsule")
TOOL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SampleRanges:
    handle_length: tuple[float, float] = (0.05, 0.30)
    handle_width: tuple[float, float] = (0.01, 0.04)
    head_length: tuple[float, float] = (0.01, 0.15)
    head_width: tuple[float, float] = (0.005, 0.12)
    handle_density: tuple[float, float] = (300.0, 600.0)
    head_density: tuple[float, float] = (300.0, 2000.0)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi or lo < 0:
                raise ValidationError(f"range {name}=({lo}, {hi}) is degenerate")


_DEFAULT_RANGES = SampleRanges()


@dataclass(frozen=True)
class PartSpec:
    """One primitive. Long axis is the part-local x axis.

    For capsules ``length`` is tip to tip and ``width == height`` is the
    diameter; a capsule shorter than its diameter degrades to a sphere.
    """

    shape: str
    length: float
    width: float
    height: float
    density: float

    def validate(self, prefix: str = "part") -> None:
        if self.shape not in SHAPES:
            raise ValidationError(f"{prefix}.shape must be one of {SHAPES}, got {self.shape!r}")
        for name in ("length", "width", "height"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{prefix}.{name} must be a positive number, got {v!r}")
        if not (isinstance(self.density, (int, float)) and math.isfinite(self.density) and self.density >= 0):
            raise ValidationError(f"{prefix}.density must be non-negative, got {self.density!r}")
        if self.shape == "capsule" and self.width != self.height:
            raise ValidationError(f"{prefix}: capsule width and height must both equal the diameter")

    @property
    def radius(self) -> float:
        return 0.5 * self.width

    @property
    def cylinder_length(self) -> float:
        return max(self.length - 2.0 * self.radius, 0.0)

    @property
    def volume(self) -> float:
        if self.shape == "cuboid":
            return self.length * self.width * self.height
        r = self.radius
        return math.pi * r * r * self.cylinder_length + 4.0 / 3.0 * math.pi * r**3

    @property
    def mass(self) -> float:
        return self.density * self.volume

    def local_inertia(self) -> np.ndarray:
        """Inertia about the part centroid, in the part frame."""
        if self.shape == "cuboid":
            m, L, W, H = self.mass, self.length, self.width, self.height
            return m / 12.0 * np.diag([W * W + H * H, L * L + H * H, L * L + W * W])
        r, ell = self.radius, self.cylinder_length
        m_cyl = self.density * math.pi * r * r * ell
        m_caps = self.density * 4.0 / 3.0 * math.pi * r**3
        axial = m_cyl * r * r / 2.0 + m_caps * 2.0 * r * r / 5.0
        # hemisphere caps about the centre: 2/5 m r^2 + m (l^2/4 + 3 l r / 8)
        transverse = m_cyl * (ell * ell / 12.0 + r * r / 4.0) + m_caps * (
            2.0 * r * r / 5.0 + ell * ell / 4.0 + 3.0 * ell * r / 8.0
        )
        return np.diag([axial, transverse, transverse])

    def half_extents(self) -> np.ndarray:
        """Half extents of the part's bounding box in its own frame."""
        along = max(self.length, self.width) if self.shape == "capsule" else self.length
        return 0.5 * np.array([along, self.width, self.height])

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask of local-frame points inside the solid."""
        if self.shape == "cuboid":
            h = 0.5 * np.array([self.length, self.width, self.height])
            return np.all(np.abs(pts) <= h, axis=1)
        half_seg = 0.5 * self.cylinder_length
        x = np.clip(pts[:, 0], -half_seg, half_seg)
        d2 = (pts[:, 0] - x) ** 2 + pts[:, 1] ** 2 + pts[:, 2] ** 2
        return d2 <= self.radius**2

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "length": self.length,
            "width": self.width,
            "height": self.height,
            "density": self.density,
        }


@dataclass(frozen=True)
class GraspBox:
    center: np.ndarray
    extents: np.ndarray

    def to_dict(self) -> dict:
        return {"center": [float(v) for v in self.center], "extents": [float(v) for v in self.extents]}


@dataclass(frozen=True, eq=False)
class ToolSpec:
    handle: PartSpec
    head: PartSpec
    head_offset: Pose
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    grasp_box: GraspBox
    seed: int | None = None
    mesh: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "schema_version": TOOL_SCHEMA_VERSION,
            "seed": self.seed,
            "handle": self.handle.to_dict(),
            "head": self.head.to_dict(),
            "head_offset": self.head_offset.to_list(),
            "mass": float(self.mass),
            "com": [float(v) for v in self.com],
            "inertia": [[float(v) for v in row] for row in self.inertia],
            "grasp_box": self.grasp_box.to_dict(),
        }
        if self.mesh is not None:
            out["mesh"] = self.mesh
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, ToolSpec):
            return NotImplemented
        a, b = self.to_dict(), other.to_dict()
        a.pop("mesh", None)
        b.pop("mesh", None)
        return a == b


_EYE3 = np.eye(3)
_HEAD_ROTATION = quat_from_axis_angle([0, 0, 1], math.pi / 2)


def head_offset_for(handle: PartSpec) -> Pose:
    """Head centred on the handle tip, head long axis along object +y."""
    return Pose([0.5 * handle.length, 0.0, 0.0], _HEAD_ROTATION)


def mass_properties(handle: PartSpec, head: PartSpec, head_offset: Pose) -> tuple[float, np.ndarray, np.ndarray]:
    """Composite mass, centre of mass and inertia about the COM (handle frame)."""
    m1, m2 = handle.mass, head.mass
    mass = m1 + m2
    if mass <= 0:
        raise ValidationError("tool has zero mass")
    c2 = np.asarray(head_offset.translation, dtype=float)
    com = (m2 / mass) * c2
    R = head_offset.matrix
    inertia = handle.local_inertia() + R @ head.local_inertia() @ R.T
    # parallel-axis shift of each part from its centroid to the composite COM
    for m, d in ((m1, -com), (m2, c2 - com)):
        inertia += m * (float(d @ d) * _EYE3 - d[:, None] * d[None, :])
    return mass, com, 0.5 * (inertia + inertia.T)


def build_tool(handle: PartSpec, head: PartSpec, seed: int | None = None, mesh_resolution: int = 0) -> ToolSpec:
    handle.validate("handle")
    head.validate("head")
    offset = head_offset_for(handle)
    mass, com, inertia = mass_properties(handle, head, offset)
    box = GraspBox(np.zeros(3), np.array([handle.length, handle.width, handle.height]))
    tool = ToolSpec(handle, head, offset, mass, com, inertia, box, seed)
    if mesh_resolution > 0:
        tool = ToolSpec(handle, head, offset, mass, com, inertia, box, seed, tessellate(tool, mesh_resolution))
    return tool


def _sample_part(rng: np.random.Generator, length_rng, width_rng, density_rng) -> PartSpec:
    shape = SHAPES[int(rng.integers(2))]
    length = float(rng.uniform(*length_rng))
    width = float(rng.uniform(*width_rng))
    height = width if shape == "capsule" else float(rng.uniform(*width_rng))
    density = float(rng.uniform(*density_rng))
    return PartSpec(shape, length, width, height, density)


def sample_tool(
    rng: np.random.Generator,
    ranges: SampleRanges | None = None,
    seed: int | None = None,
    mesh_resolution: int = 0,
) -> ToolSpec:
    """Draw a random handle-head tool. Part shapes are chosen independently, 50/50."""
    ranges = ranges or _DEFAULT_RANGES
    handle = _sample_part(rng, ranges.handle_length, ranges.handle_width, ranges.handle_density)
    head = _sample_part(rng, ranges.head_length, ranges.head_width, ranges.head_density)
    return build_tool(handle, head, seed=seed, mesh_resolution=mesh_resolution)


def derive_grasp_bbox(handle_points, head_points, up=(0.0, 0.0, 1.0)) -> tuple[GraspBox, Pose]:
    """Grasp box and object frame from segmented handle/head point clouds.

    The frame is centred at the handle centroid with +x toward the head
    centroid; +z is world ``up`` made orthogonal to x (world +x is used
    instead when x is nearly vertical). Extents are the handle's spans in
    that frame. The returned box centre is expressed in the object frame.
    """
    hp = np.asarray(handle_points, dtype=float)
    dp = np.asarray(head_points, dtype=float)
    for name, pts in (("handle", hp), ("head", dp)):
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
            raise ValidationError(f"{name} cloud needs at least 3 points of dimension 3")
        if not np.all(np.isfinite(pts)):
            raise ValidationError(f"{name} cloud has non-finite points")
        if np.linalg.matrix_rank(pts - pts.mean(axis=0), tol=1e-9) < 2:
            raise ValidationError(f"{name} cloud is collinear")
    c_handle, c_head = hp.mean(axis=0), dp.mean(axis=0)
    axis = c_head - c_handle
    dist = np.linalg.norm(axis)
    if dist < 1e-3:
        raise ValidationError(f"handle and head centroids coincide ({dist * 1000:.3f} mm apart); orientation is ambiguous")
    x = axis / dist
    ref = np.asarray(up, dtype=float)
    ref = ref / np.linalg.norm(ref)
    if abs(ref @ x) > 0.99:
        ref = np.array([1.0, 0.0, 0.0]) if abs(x[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    z = ref - (ref @ x) * x
    z /= np.linalg.norm(z)
    y = np.cross(z, x)
    R = np.column_stack([x, y, z])
    frame = Pose.from_matrix(np.block([[R, c_handle[:, None]], [np.zeros((1, 3)), np.ones((1, 1))]]))
    local = (hp - c_handle) @ R
    extents = local.max(axis=0) - local.min(axis=0)
    return GraspBox(np.zeros(3), extents), frame


def sample_surface_points(part: PartSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points on the part surface, in the part frame (for synthetic clouds)."""
    if part.shape == "cuboid":
        h = 0.5 * np.array([part.length, part.width, part.height])
        pts = rng.uniform(-h, h, size=(n, 3))
        face = rng.integers(3, size=n)
        sign = rng.choice([-1.0, 1.0], size=n)
        pts[np.arange(n), face] = sign * h[face]
        return pts
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = dirs * part.radius
    pts[:, 0] += np.sign(pts[:, 0]) * 0.5 * part.cylinder_length
    return pts


def tessellate(tool: ToolSpec, resolution: int = 12) -> dict:
    """Triangle mesh of both parts in the object frame."""
    verts: list[np.ndarray] = []
    faces: list[np.ndarray] = []
    for part, pose in ((tool.handle, Pose.identity()), (tool.head, tool.head_offset)):
        v, f = _part_mesh(part, resolution)
        faces.append(f + sum(len(x) for x in verts))
        verts.append(pose.apply(v))
    return {
        "resolution": int(resolution),
        "vertices": np.round(np.concatenate(verts), 9).tolist(),
        "faces": np.concatenate(faces).astype(int).tolist(),
    }


def _part_mesh(part: PartSpec, res: int) -> tuple[np.ndarray, np.ndarray]:
    if part.shape == "cuboid":
        h = 0.5 * np.array([part.length, part.width, part.height])
        v = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float) * h
        f = np.array(
            [[0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
             [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]]
        )
        return v, f
    # capsule: latitude rings of a sphere, split at the equator and pushed apart
    res = max(res, 4)
    n_lat = res // 2 * 2
    lat = np.linspace(0.0, np.pi, n_lat + 1)
    lon = np.linspace(0.0, 2 * np.pi, res, endpoint=False)
    rings = []
    for i, a in enumerate(lat):
        shift = 0.5 * part.cylinder_length * (1 if i <= n_lat // 2 else -1)
        ring = np.column_stack(
            [np.full(res, np.cos(a) * part.radius + shift), np.sin(a) * np.cos(lon) * part.radius, np.sin(a) * np.sin(lon) * part.radius]
        )
        rings.append(ring)
        if i == n_lat // 2:
            rings.append(ring - [part.cylinder_length, 0.0, 0.0])
    v = np.concatenate(rings)
    f = []
    for i in range(len(rings) - 1):
        for j in range(res):
            a, b = i * res + j, i * res + (j + 1) % res
            c, d = a + res, b + res
            f.extend([[a, c, b], [b, c, d]])
    return v, np.array(f)


def tool_to_json(tool: ToolSpec) -> str:
    return json.dumps(tool.to_dict(), indent=2, sort_keys=True) + "\n"


def export_tool(tool: ToolSpec, path) -> None:
    atomic_write_text(path, tool_to_json(tool))


def _part_from(data, prefix: str) -> PartSpec:
    if not isinstance(data, dict):
        raise ValidationError(f"{prefix} must be an object")
    missing = [k for k in ("shape", "length", "width", "height", "density") if k not in data]
    if missing:
        raise ValidationError(f"{prefix}.{missing[0]} is missing")
    part = PartSpec(data["shape"], data["length"], data["width"], data["height"], data["density"])
    part.validate(prefix)
    return part


def tool_from_dict(data: dict) -> ToolSpec:
    if not isinstance(data, dict):
        raise ValidationError("tool file must contain a JSON object")
    for key in ("handle", "head", "head_offset", "mass", "com", "inertia", "grasp_box"):
        if key not in data:
            raise ValidationError(f"{key} is missing")
    handle = _part_from(data["handle"], "handle")
    head = _part_from(data["head"], "head")
    try:
        offset = Pose.from_list(data["head_offset"])
        com = np.asarray(data["com"], dtype=float).reshape(3)
        inertia = np.asarray(data["inertia"], dtype=float).reshape(3, 3)
        box = GraspBox(
            np.asarray(data["grasp_box"]["center"], dtype=float).reshape(3),
            np.asarray(data["grasp_box"]["extents"], dtype=float).reshape(3),
        )
        mass = float(data["mass"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ValidationError(f"malformed numeric field: {exc}") from exc
    if not mass > 0:
        raise ValidationError(f"mass must be positive, got {mass}")
    if np.any(box.extents <= 0):
        raise ValidationError("grasp_box.extents must be positive")
    if not np.allclose(inertia, inertia.T, atol=1e-12) or np.any(np.linalg.eigvalsh(inertia) <= 0):
        raise ValidationError("inertia must be symmetric positive definite")
    return ToolSpec(handle, head, offset, mass, com, inertia, box, data.get("seed"), data.get("mesh"))


def import_tool(path) -> ToolSpec:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return tool_from_dict(data)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
