"""Regenerate the bundled robot chain files in src/toolforge/data/.

The default model is a plausible stand-in for a 7-DoF arm carrying a
22-DoF five-fingered hand; link lengths are approximate. ``default_q`` is
solved here so the palm hovers above the table centre facing down.
"""

import json
import math
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from toolforge.geometry import quat_from_axis_angle
from toolforge.robot import RobotModel

DATA = Path(__file__).resolve().parents[1] / "src" / "toolforge" / "data"
D = math.radians


def T(t=(0, 0, 0), q=(1, 0, 0, 0)):
    return [float(v) for v in (*t, *q)]


def rev(name, parent, t, axis, lo, hi, q=(1, 0, 0, 0), abduction=False):
    d = {"name": name, "parent": parent, "fixed_transform": T(t, q), "type": "revolute", "axis": list(axis), "limits": [lo, hi]}
    if abduction:
        d["abduction"] = True
    return d


def fixed(name, parent, t, q=(1, 0, 0, 0)):
    return {"name": name, "parent": parent, "fixed_transform": T(t, q), "type": "fixed"}


def finger(prefix, knuckle, lengths, extra_cup=False):
    links = []
    parent = "palm"
    if extra_cup:
        links.append(rev(f"{prefix}_cup", parent, knuckle, (0, 0, 1), 0.0, 0.5))
        parent, knuckle = f"{prefix}_cup", (0, 0, 0)
    links.append(rev(f"{prefix}_abd", parent, knuckle, (1, 0, 0), -0.35, 0.35, abduction=True))
    links.append(rev(f"{prefix}_mcp", f"{prefix}_abd", (0, 0, 0), (0, 1, 0), -0.2, 1.6))
    links.append(rev(f"{prefix}_pip", f"{prefix}_mcp", (0, 0, lengths[0]), (0, 1, 0), 0.0, 1.7))
    links.append(rev(f"{prefix}_dip", f"{prefix}_pip", (0, 0, lengths[1]), (0, 1, 0), 0.0, 1.5))
    links.append(fixed(f"{prefix}_tip", f"{prefix}_dip", (0, 0, lengths[2])))
    return links


def default_model_spec():
    base_q = quat_from_axis_angle([0, 0, 1], -math.pi / 2)  # arm faces world -y
    links = [
        fixed("arm_base", "world", (0.0, 0.80, 0.60), base_q),
        rev("a1", "arm_base", (0, 0, 0.1575), (0, 0, 1), -D(170), D(170)),
        rev("a2", "a1", (0, 0, 0.2025), (0, 1, 0), -D(120), D(120)),
        rev("a3", "a2", (0, 0, 0.2045), (0, 0, 1), -D(170), D(170)),
        rev("a4", "a3", (0, 0, 0.2155), (0, -1, 0), -D(120), D(120)),
        rev("a5", "a4", (0, 0, 0.1845), (0, 0, 1), -D(170), D(170)),
        rev("a6", "a5", (0, 0, 0.2155), (0, 1, 0), -D(120), D(120)),
        rev("a7", "a6", (0, 0, 0.081), (0, 0, 1), -D(175), D(175)),
        fixed("flange", "a7", (0, 0, 0.045)),
        # palm centre 8 cm past the flange; palm normal is palm +x, fingers along +z
        fixed("palm", "flange", (0, 0, 0.08)),
    ]
    links += rev_thumb()
    links += finger("index", (0.0, -0.030, 0.045), (0.045, 0.028, 0.022))
    links += finger("middle", (0.0, -0.010, 0.048), (0.050, 0.030, 0.023))
    links += finger("ring", (0.0, 0.010, 0.046), (0.046, 0.028, 0.022))
    links += finger("pinky", (0.0, 0.030, 0.040), (0.036, 0.022, 0.020), extra_cup=True)
    spheres = [
        {"link": "a3", "center": [0, 0, 0.10], "radius": 0.07},
        {"link": "a4", "center": [0, 0, 0.10], "radius": 0.065},
        {"link": "a5", "center": [0, 0, 0.10], "radius": 0.06},
        {"link": "a6", "center": [0, 0, 0.0], "radius": 0.06},
        {"link": "a7", "center": [0, 0, 0.02], "radius": 0.05},
        {"link": "flange", "center": [0, 0, 0.03], "radius": 0.045},
        {"link": "palm", "center": [-0.01, 0, 0.0], "radius": 0.04},
        {"link": "palm", "center": [-0.01, 0, 0.045], "radius": 0.035},
    ]
    return {
        "name": "arm7_hand22",
        "base": "world",
        "links": links,
        "n_arm": 7,
        "frames": {
            "palm": "palm",
            "end_effector": "palm",
            "fingertips": ["thumb_tip", "index_tip", "middle_tip", "ring_tip", "pinky_tip"],
        },
        "abduction_limit_scale": 0.8,
        "collision_spheres": spheres,
    }


def rev_thumb():
    q0 = quat_from_axis_angle([1, 0, 0], D(60))
    return [
        rev("thumb_cmc_rot", "palm", (0.02, -0.035, -0.01), (0, 0, 1), -0.4, 1.4, q=q0),
        rev("thumb_cmc_abd", "thumb_cmc_rot", (0, 0, 0), (1, 0, 0), -0.4, 0.6, abduction=True),
        rev("thumb_mcp", "thumb_cmc_abd", (0, 0, 0.04), (0, 1, 0), -0.2, 1.2),
        rev("thumb_pip", "thumb_mcp", (0, 0, 0.035), (0, 1, 0), 0.0, 1.4),
        rev("thumb_dip", "thumb_pip", (0, 0, 0.03), (0, 1, 0), 0.0, 1.4),
        fixed("thumb_tip", "thumb_dip", (0, 0, 0.022)),
    ]


def solve_default(desc):
    model = RobotModel(desc)
    # palm 25 cm above the table centre, fingers pointing forward (-y), palm facing down
    target_R = np.column_stack([[0, 0, -1], [1, 0, 0], [0, -1, 0]]).astype(float)
    target_p = np.array([0.0, 0.05, 0.85])
    q = np.zeros(model.n_joints)
    q_hand = np.clip(np.where(model.abduction[model.n_arm:], 0.0, 0.2), model.lower[model.n_arm:], model.upper[model.n_arm:])
    seed = np.array([0.0, 0.5, 0.0, -1.4, 0.0, -0.6, 0.0])

    def resid(qa):
        q[:7] = qa
        q[7:] = q_hand
        M = model.frame_matrix(q, "palm")
        return np.concatenate([M[:3, 3] - target_p, 0.3 * (M[:3, :3] - target_R).ravel(), 0.01 * (qa - seed)])

    sol = least_squares(resid, seed, bounds=(model.lower[:7] + 0.05, model.upper[:7] - 0.05))
    q[:7] = sol.x
    return [round(float(v), 6) for v in q]


def planar_spec():
    return {
        "name": "planar2",
        "base": "world",
        "links": [
            rev("j1", "world", (0, 0, 0), (0, 0, 1), -math.pi, math.pi),
            rev("j2", "j1", (1.0, 0, 0), (0, 0, 1), -math.pi, math.pi),
            fixed("tip", "j2", (1.0, 0, 0)),
        ],
        "n_arm": 2,
        "frames": {"end_effector": "tip"},
    }


def main():
    desc = default_model_spec()
    desc["default_q"] = solve_default(desc)
    (DATA / "default_robot.json").write_text(json.dumps(desc, indent=1) + "\n")
    (DATA / "planar2.json").write_text(json.dumps(planar_spec(), indent=1) + "\n")
    m = RobotModel(desc)
    print("joints", m.n_joints, "palm", m.frame_pose(m.default_q, "palm"))


if __name__ == "__main__":
    main()
