import numpy as np
import pytest

from oracles import delay_by_slicing
from toolforge.errors import ToolforgeError, ValidationError
from toolforge.geometry import Pose, rotation_angle, quat_mul, quat_conj
from toolforge.randomization import (
    DelayQueue,
    RandomizationConfig,
    delay_push_pop,
    perturb_bbox,
    perturb_pose,
    sample_table_offset,
    sample_wrench,
)
from toolforge.seeding import derive_rng


def test_defaults():
    c = RandomizationConfig()
    assert (c.obs_delay_max, c.action_delay_max, c.object_pose_delay_max) == (3, 3, 10)
    assert (c.joint_vel_noise, c.object_pos_noise, c.object_rot_noise_deg) == (0.1, 0.01, 5.0)
    assert (c.force_scale, c.torque_scale) == (5.0, 0.5)
    assert c.bbox_fraction == 0.1


@pytest.mark.parametrize("delay", range(11))
def test_delay_matches_slicing_oracle(delay):
    payloads = list(range(1, 40))
    q = DelayQueue(10, delay)
    assert [delay_push_pop(q, p) for p in payloads] == delay_by_slicing(payloads, delay)


def test_delay_trace():
    q = DelayQueue(3, 3)
    assert [q.push_pop(x) for x in [1, 2, 3, 4, 5]] == [1, 1, 1, 1, 2]


def test_delay_errors():
    with pytest.raises(ToolforgeError, match="empty"):
        DelayQueue(3, 1).pop()
    with pytest.raises(ValidationError):
        DelayQueue(3, 4)


def test_delay_sampling_reproducible():
    a = [DelayQueue.sampled(10, derive_rng(5, "delay", i)).delay for i in range(50)]
    b = [DelayQueue.sampled(10, derive_rng(5, "delay", i)).delay for i in range(50)]
    assert a == b and set(a) <= set(range(11)) and len(set(a)) > 5


def test_zero_noise_is_identity():
    p = Pose([0.1, 0.2, 0.3], [0.5, 0.5, 0.5, 0.5])
    assert perturb_pose(p, 0, 0, np.random.default_rng(0)) is p


def test_pose_noise_statistics():
    rng = np.random.default_rng(7)
    p = Pose.identity()
    samples = [perturb_pose(p, 0.01, np.radians(5), rng) for _ in range(100_000)]
    t = np.array([s.translation for s in samples])
    assert np.allclose(t.std(axis=0), 0.01, rtol=0.02)
    q = np.array([s.rotation for s in samples])
    assert np.allclose(np.linalg.norm(q, axis=1), 1.0)
    ang = np.array([rotation_angle(x) for x in q[:20_000]])
    # |N(0, s^2)| has mean s * sqrt(2 / pi)
    assert ang.mean() == pytest.approx(np.radians(5) * np.sqrt(2 / np.pi), rel=0.03)


def test_wrench_bounds():
    rng = np.random.default_rng(3)
    c = RandomizationConfig()
    w = np.array([np.concatenate(sample_wrench(rng, c)) for _ in range(5000)])
    assert np.all(np.abs(w[:, :3]) <= 5.0) and np.all(np.abs(w[:, 3:]) <= 0.5)
    assert np.abs(w[:, :3]).max() > 4.9


def test_bbox_and_table():
    rng = np.random.default_rng(0)
    ext = np.array([0.2, 0.02, 0.01])
    out = np.array([perturb_bbox(ext, rng, 0.1) for _ in range(1000)])
    assert np.all(out >= 0.9 * ext - 1e-12) and np.all(out <= 1.1 * ext + 1e-12)
    assert np.array_equal(perturb_bbox(ext, rng, 0.0), ext)
    with pytest.raises(ValidationError):
        perturb_bbox([0.1, 0.0, 0.1], rng, 0.1)
    offs = [sample_table_offset(rng, 0.01) for _ in range(1000)]
    assert max(map(abs, offs)) <= 0.01
    assert sample_table_offset(rng, 0.0) == 0.0


def test_invalid_config():
    with pytest.raises(ValidationError, match="force_scale"):
        RandomizationConfig(force_scale=-1)
    with pytest.raises(ValidationError, match="integer"):
        RandomizationConfig(obs_delay_max=2.5)


def test_streams_bit_reproducible():
    a = derive_rng(11, "obs_noise", 3).normal(size=100)
    b = derive_rng(11, "obs_noise", 3).normal(size=100)
    c = derive_rng(11, "obs_noise", 4).normal(size=100)
    assert a.tobytes() == b.tobytes() and a.tobytes() != c.tobytes()
