"""Regenerate the bundled fixtures under src/toolforge/data/fixtures.

Run from the repository root: ``PYTHONPATH=src python3 scripts/make_fixtures.py``.
"""

import json
from pathlib import Path

import numpy as np

from toolforge.geometry import Pose, quat_from_axis_angle
from toolforge.planners import table_rotation_fixture
from toolforge.trajectory import from_poses, save_trajectory

OUT = Path(__file__).resolve().parents[1] / "src" / "toolforge" / "data" / "fixtures"
TABLE_Z = 0.6


def table_rotation():
    grab, goals = table_rotation_fixture()
    save_trajectory(from_poses(goals, 3.0, TABLE_Z), OUT / "table_rotation_goals.jsonl")
    (OUT / "table_rotation_grab.json").write_text(json.dumps({"grab": grab.to_list()}) + "\n")


def synthetic_eval():
    # 10 goals; the rollout hits goals 0-2 exactly at steps 5, 12 and 20, then falls at step 25
    goals = [Pose([0.05 * k - 0.2, 0.0, 0.8], quat_from_axis_angle([0, 0, 1], 0.1 * k)) for k in range(10)]
    save_trajectory(from_poses(goals, 3.0, TABLE_Z), OUT / "synthetic_goals.jsonl")
    away = Pose.from_translation([0.0, -0.3, 0.7])
    hits = {5: 0, 12: 1, 20: 2}
    lines = [json.dumps({"episode": {"seed": 0, "note": "synthetic"}})]
    for step in range(1, 26):
        pose = goals[hits[step]] if step in hits else away
        term = "fallen" if step == 25 else "running"
        lines.append(json.dumps({"step": step, "object_pose": pose.to_list(), "termination": term}))
    (OUT / "synthetic_rollout.jsonl").write_text("\n".join(lines) + "\n")
    (OUT / "synthetic_expected.json").write_text(
        json.dumps({"goals_total": 10, "goals_reached": 3, "task_progress": 30.0, "failure": "fallen"}) + "\n"
    )


def demo_30hz():
    # resting 3 cm above the table for 60 frames, then rising 3 mm per frame;
    # frame 84 is the first more than 10 cm above the table
    poses = []
    for i in range(300):
        z = TABLE_Z + 0.03 + (0.003 * (i - 60) if i >= 60 else 0.0)
        poses.append(Pose([0.001 * i, 0.0, z], quat_from_axis_angle([0, 0, 1], 0.002 * i)))
    save_trajectory(from_poses(poses, 30.0, TABLE_Z), OUT / "demo_30hz.jsonl")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    table_rotation()
    synthetic_eval()
    demo_30hz()
    print("fixtures written to", OUT)


if __name__ == "__main__":
    main()
