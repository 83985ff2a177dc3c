"""Goal trajectories: preprocessing, JSONL storage and Task Progress evaluation.

Task Progress is measured with a closed-loop pointer: goal ``k`` becomes
active only after goal ``k - 1`` was reached, and a goal counts when the
keypoint distance (fixed reward scales) drops strictly below ``eps``.
Goal timestamps are kept for provenance but ignored by the evaluator.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from ._io import atomic_write_text
from .errors import ParseError, ValidationError
from .geometry import REWARD_KEYPOINT_SCALES, Pose, keypoint_distance

LIFTOFF_THRESHOLD = 0.10  # m above the table


@dataclass
class GoalTrajectory:
    times: np.ndarray
    poses: list[Pose]
    rate_hz: float
    table_z: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.poses) == 0:
            raise ValidationError("goal trajectory needs at least one waypoint")
        if self.times.shape != (len(self.poses),):
            raise ValidationError("one timestamp per waypoint is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("timestamps must be strictly increasing")
        if not self.rate_hz > 0:
            raise ValidationError("rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def heights(self) -> np.ndarray:
        return np.array([p.translation[2] for p in self.poses])

    def subset(self, idx, rate_hz: float | None = None) -> "GoalTrajectory":
        idx = list(idx)
        return GoalTrajectory(self.times[idx], [self.poses[i] for i in idx], rate_hz or self.rate_hz, self.table_z)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GoalTrajectory):
            return NotImplemented
        return (
            len(self) == len(other)
            and self.rate_hz == other.rate_hz
            and self.table_z == other.table_z
            and np.array_equal(self.times, other.times)
            and all(a.to_list() == b.to_list() for a, b in zip(self.poses, other.poses))
        )


def from_poses(poses, rate_hz: float, table_z: float = 0.0) -> GoalTrajectory:
    poses = list(poses)
    return GoalTrajectory(np.arange(len(poses)) / rate_hz, poses, rate_hz, table_z)


def downsample(traj: GoalTrajectory, out_hz: float) -> GoalTrajectory:
    """Keep every ``round(rate / out_hz)``-th frame, starting with the first."""
    if not out_hz > 0:
        raise ValidationError("output rate must be positive")
    if out_hz > traj.rate_hz:
        raise ValidationError(f"cannot downsample {traj.rate_hz} Hz to {out_hz} Hz")
    stride = max(int(round(traj.rate_hz / out_hz)), 1)
    return traj.subset(range(0, len(traj), stride), traj.rate_hz / stride)


def truncate_liftoff(traj: GoalTrajectory, z_table: float | None = None, z_thresh: float = LIFTOFF_THRESHOLD) -> GoalTrajectory:
    """Drop the frames before the object first rises more than ``z_thresh`` above the table."""
    z_table = traj.table_z if z_table is None else z_table
    above = np.nonzero(traj.heights - z_table > z_thresh)[0]
    if len(above) == 0:
        raise ValidationError(f"object never rises {z_thresh} m above the table (z_table={z_table})")
    return traj.subset(range(int(above[0]), len(traj)))


def preprocess(
    traj: GoalTrajectory,
    out_hz: float = 3.0,
    z_table: float | None = None,
    z_thresh: float = LIFTOFF_THRESHOLD,
) -> GoalTrajectory:
    """Downsample to ``out_hz`` and then trim the pre-lift-off frames."""
    return truncate_liftoff(downsample(traj, out_hz), z_table, z_thresh)


# -- JSONL storage -------------------------------------------------------------


def _loc(path, lineno) -> str:
    return f"{path}:{lineno}"


def _parse_pose(value, where: str, name: str = "pose") -> Pose:
    if not isinstance(value, list):
        raise ParseError(f"{where}: field '{name}' must be a list of 7 numbers")
    if len(value) != 7:
        missing = "quaternion" if len(value) == 3 else "translation/quaternion"
        raise ParseError(f"{where}: field '{name}' has {len(value)} values, {missing} part missing (expected 7)")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ParseError(f"{where}: field '{name}' must contain only numbers")
    try:
        return Pose.from_list(value)
    except ValidationError as exc:
        raise ParseError(f"{where}: {exc}") from None


def load_trajectory(path) -> GoalTrajectory:
    """Read a header line ``{rate_hz, table_z}`` followed by ``{t, pose}`` records."""
    header = None
    times, poses = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = _loc(path, lineno)
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{where}:{exc.colno}: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise ParseError(f"{where}: expected a JSON object")
            if header is None:
                for key in ("rate_hz", "table_z"):
                    if key not in rec:
                        raise ParseError(f"{where}: header is missing field '{key}'")
                header = rec
                continue
            for key in ("t", "pose"):
                if key not in rec:
                    raise ParseError(f"{where}: record is missing field '{key}'")
            t = rec["t"]
            if not isinstance(t, (int, float)) or not math.isfinite(t):
                raise ParseError(f"{where}: field 't' must be a finite number")
            if times and t <= times[-1]:
                raise ParseError(f"{where}: timestamp {t} is not after {times[-1]}")
            times.append(float(t))
            poses.append(_parse_pose(rec["pose"], where))
    if header is None:
        raise ParseError(f"{path}: empty trajectory file")
    if not poses:
        raise ParseError(f"{path}: no waypoints after the header")
    try:
        return GoalTrajectory(np.array(times), poses, float(header["rate_hz"]), float(header["table_z"]))
    except ValidationError as exc:
        raise ParseError(f"{path}: {exc}") from None


def trajectory_to_jsonl(traj: GoalTrajectory) -> str:
    lines = [json.dumps({"rate_hz": traj.rate_hz, "table_z": traj.table_z})]
    lines += [json.dumps({"t": float(t), "pose": p.to_list()}) for t, p in zip(traj.times, traj.poses)]
    return "\n".join(lines) + "\n"


def save_trajectory(traj: GoalTrajectory, path) -> None:
    atomic_write_text(path, trajectory_to_jsonl(traj))


# -- evaluation ----------------------------------------------------------------


@dataclass
class ProgressReport:
    total: int
    reached: int
    steps_to_reach: list[int] = field(default_factory=list)
    failure: str | None = None
    steps: int = 0

    @property
    def progress(self) -> float:
        return 100.0 * self.reached / self.total

    def to_dict(self) -> dict:
        return {
            "goals_total": self.total,
            "goals_reached": self.reached,
            "task_progress": self.progress,
            "steps_to_reach": list(self.steps_to_reach),
            "failure": self.failure,
            "steps": self.steps,
        }


REPORT_CSV_COLUMNS = ("rollout", "goals_total", "goals_reached", "task_progress", "failure", "steps")


def report_csv_text(reports: dict[str, ProgressReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(REPORT_CSV_COLUMNS)
    for name, r in reports.items():
        w.writerow([name, r.total, r.reached, repr(r.progress), r.failure or "", r.steps])
    return buf.getvalue()


def write_report_csv(path, reports: dict[str, ProgressReport]) -> None:
    atomic_write_text(path, report_csv_text(reports))


@dataclass
class Frame:
    """One rollout step: the object pose after the step and, on the final
    step of a failed episode, the failure reason."""

    object_pose: Pose
    failure: str | None = None


def _as_frame(item) -> Frame:
    if isinstance(item, Frame):
        return item
    if isinstance(item, Pose):
        return Frame(item)
    pose, failure = item
    return Frame(pose, failure)


def evaluate_progress(
    rollout: Iterable,
    goals,
    eps: float = 0.02,
    step_budget: int | None = None,
    scales=REWARD_KEYPOINT_SCALES,
) -> ProgressReport:
    """Closed-loop Task Progress over ``rollout`` frames.

    ``rollout`` yields :class:`Frame` objects (or bare poses). Evaluation
    stops when every goal is reached, a frame reports a failure, the
    rollout ends (reported as ``"rollout_ended"``) or ``step_budget`` frames
    were consumed (``"budget"``).
    """
    goal_list = list(goals.poses if isinstance(goals, GoalTrajectory) else goals)
    if not goal_list:
        raise ValidationError("goal list is empty")
    if not eps > 0:
        raise ValidationError("eps must be positive")
    report = ProgressReport(total=len(goal_list), reached=0)
    k = 0
    step = 0
    for item in rollout:
        if step_budget is not None and step >= step_budget:
            report.failure = "budget"
            break
        frame = _as_frame(item)
        step += 1
        if keypoint_distance(frame.object_pose, goal_list[k], scales) < eps:
            report.reached += 1
            report.steps_to_reach.append(step)
            k += 1
            if k == len(goal_list):
                break
        if frame.failure is not None:
            report.failure = frame.failure
            break
    else:
        if k < len(goal_list):
            report.failure = "rollout_ended"
    report.steps = step
    return report


class RecordedRollout:
    """Replay of logged object poses; ``failure`` attaches to the last frame."""

    def __init__(self, poses, failure: str | None = None):
        self.poses = list(poses)
        self.failure = failure

    def __iter__(self) -> Iterator[Frame]:
        n = len(self.poses)
        for i, p in enumerate(self.poses):
            yield Frame(p, self.failure if i == n - 1 else None)

    @classmethod
    def load(cls, path) -> "RecordedRollout":
        """Read a rollout log (JSONL with ``object_pose`` per step and an optional
        ``termination`` field)."""
        poses, failure = [], None
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                where = _loc(path, lineno)
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{where}:{exc.colno}: {exc.msg}") from None
                if not isinstance(rec, dict) or "object_pose" not in rec:
                    if isinstance(rec, dict) and "episode" in rec and "step" not in rec:
                        continue  # episode header
                    raise ParseError(f"{where}: record is missing field 'object_pose'")
                poses.append(_parse_pose(rec["object_pose"], where, "object_pose"))
                term = rec.get("termination")
                if term not in (None, "running", "max_success"):
                    failure = term
        return cls(poses, failure)
