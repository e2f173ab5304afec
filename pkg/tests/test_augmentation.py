import numpy as np
import pytest

from conftest import random_sequence
from mvkit.augmentation import (
    AugmentConfig,
    augment_dataset,
    derive_seed,
    flip_lr,
    random_root_rotation,
    resample,
    sample_root_rotation,
)
from mvkit.metrics import pa_mpjpe
from mvkit.rotations import axis_angle_to_quat, quat_angle, quat_conj, quat_mul, quat_to_axis_angle, quat_to_matrix
from mvkit.sequence import MotionSequence
from mvkit.skeleton import Skeleton, SkeletonError, fk_sequence


def spin(T, omega, joint=1, J=24):
    """Joint ``joint`` turning about z at ``omega`` rad/frame."""
    q = np.tile([1.0, 0.0, 0.0, 0.0], (T, J, 1))
    q[:, joint] = axis_angle_to_quat(np.outer(np.arange(T) * omega, [0, 0, 1]))
    return MotionSequence(q, 30.0, root_translation=np.outer(np.arange(T), [0.1, 0.0, 0.2]))


def test_resample_identity_is_exact():
    seq = random_sequence(1, frames=17)
    out = resample(seq, 1.0)
    assert np.array_equal(out.quats, seq.quats)
    assert np.array_equal(out.betas, seq.betas)
    assert np.array_equal(out.root_translation, seq.root_translation)
    assert out.fps == seq.fps


def test_resample_factor_two_subsamples():
    seq = random_sequence(2, frames=10)
    out = resample(seq, 2.0)
    assert out.num_frames == 5
    assert np.array_equal(out.quats, seq.quats[::2])
    assert np.array_equal(out.root_translation, seq.root_translation[::2])


def test_resample_half_speed_midpoints():
    omega = 0.05
    seq = spin(20, omega)
    out = resample(seq, 0.5)
    assert out.num_frames == 40
    angles = quat_to_axis_angle(out.quats[:, 1])[:, 2]
    expected = np.minimum(np.arange(40) * 0.5, 19) * omega
    np.testing.assert_allclose(angles, expected, atol=1e-14)
    np.testing.assert_allclose(out.root_translation[1], [0.05, 0.0, 0.1], atol=1e-15)


@pytest.mark.parametrize("T, factor, n", [(10, 3.0, 3), (2, 10.0, 2), (7, 0.5, 14), (9, 2.0, 5)])
def test_resample_frame_count(T, factor, n):
    assert resample(random_sequence(T, frames=T), factor).num_frames == n


@pytest.mark.parametrize("factor", [0.0, -1.0, float("nan")])
def test_resample_rejects_bad_factor(factor):
    with pytest.raises(ValueError):
        resample(random_sequence(0), factor)


def test_resample_rejects_single_frame():
    with pytest.raises(ValueError):
        resample(random_sequence(0, frames=1), 2.0)


def test_flip_involution(skel):
    seq = random_sequence(3, frames=30)
    twice = flip_lr(flip_lr(seq, skel), skel)
    assert quat_angle(twice.quats, seq.quats).max() <= 1e-12
    assert np.abs(twice.quats - seq.quats).max() <= 1e-12
    assert np.array_equal(twice.root_translation, seq.root_translation)
    assert twice.name == seq.name


def test_flip_identity_pose(skel):
    seq = MotionSequence(np.tile([1.0, 0, 0, 0], (3, 24, 1)), 30.0)
    assert np.array_equal(flip_lr(seq, skel).quats, seq.quats)


def test_flip_axis_angle_rule(skel):
    seq = random_sequence(4, frames=5)
    out = flip_lr(seq, skel)
    aa = quat_to_axis_angle(seq.quats)[:, list(skel.mirror)] * [1, -1, -1]
    assert quat_angle(axis_angle_to_quat(aa), out.quats).max() < 1e-12


def test_flip_mirrors_fk(skel):
    seq = random_sequence(5, frames=8, betas=False)
    orig = fk_sequence(skel, seq)
    flipped = fk_sequence(skel, flip_lr(seq, skel))
    np.testing.assert_allclose(flipped, orig[:, list(skel.mirror)] * [-1, 1, 1], atol=1e-13)


def test_flip_mirror_mismatch(skel):
    small = Skeleton((-1, 0, 0), np.zeros((3, 3)), (0, 2, 1))
    with pytest.raises(SkeletonError):
        flip_lr(random_sequence(0), small)


def test_root_rotation_effects(skel):
    seq = random_sequence(6, frames=20)
    out = random_root_rotation(seq, 99)
    rel = lambda q: quat_mul(quat_conj(q[:-1, 0]), q[1:, 0])
    assert quat_angle(rel(seq.quats), rel(out.quats)).max() < 1e-12
    assert np.array_equal(out.quats[:, 1:], seq.quats[:, 1:])
    assert quat_angle(out.quats[:, 0], quat_mul(sample_root_rotation(99), seq.quats[:, 0])).max() < 1e-12


def test_root_rotation_is_rigid_motion(skel):
    seq = random_sequence(7, frames=15)
    a, b = fk_sequence(skel, seq), fk_sequence(skel, random_root_rotation(seq, 3))
    assert pa_mpjpe(b, a) < 1e-9
    da = np.linalg.norm(a[:, :, None] - a[:, None], axis=-1)
    db = np.linalg.norm(b[:, :, None] - b[:, None], axis=-1)
    assert np.abs(da - db).max() < 1e-12


def test_root_rotation_deterministic():
    seq = random_sequence(8)
    assert random_root_rotation(seq, 5).equals(random_root_rotation(seq, 5))
    assert not random_root_rotation(seq, 5).equals(random_root_rotation(seq, 6))


def test_root_rotation_is_uniform():
    # the mean of R over a uniform distribution on SO(3) is the zero matrix
    Rs = quat_to_matrix(np.stack([sample_root_rotation(s) for s in range(4000)]))
    assert np.abs(Rs.mean(axis=0)).max() < 4 * np.sqrt(1 / 3 / 4000)


def test_augment_empty_config_is_identity(skel):
    seqs = [random_sequence(s) for s in range(3)]
    out = augment_dataset(seqs, AugmentConfig(), skel)
    assert len(out) == 3 and all(a is b for a, b in zip(out, seqs))


def test_augment_counts(skel):
    seqs = [random_sequence(s, frames=10) for s in range(3)]
    out = augment_dataset(seqs, AugmentConfig(speed_factors=[1.0, 2.0], enable_flip=True), skel)
    assert len(out) == 12
    assert out[0].name == "rand0|speed=1"
    assert out[1].name == "rand0|speed=1|flip"
    assert out[3].name == "rand0|speed=2|flip"
    full = augment_dataset(seqs, AugmentConfig([0.5, 1.0, 2.0], True, 4, rng_seed=1), skel)
    assert len(full) == 3 * 3 * 2 * 4


def test_augment_deterministic(skel):
    seqs = [random_sequence(s, frames=10) for s in range(2)]
    cfg = AugmentConfig([0.8, 1.25], True, 2, rng_seed=42)
    a, b = augment_dataset(seqs, cfg, skel), augment_dataset(seqs, cfg, skel)
    assert all(x.equals(y) and x.name == y.name for x, y in zip(a, b))
    c = augment_dataset(seqs, AugmentConfig([0.8, 1.25], True, 2, rng_seed=43), skel)
    assert not a[0].equals(c[0])


def test_derive_seed_distinct():
    seeds = {derive_seed(0, i, j, k) for i in range(5) for j in range(5) for k in range(2)}
    assert len(seeds) == 50


def test_augment_outputs_are_valid_sequences(skel):
    out = augment_dataset([random_sequence(1, frames=9)], AugmentConfig([0.7], True, 2), skel)
    for s in out:
        np.testing.assert_allclose(np.linalg.norm(s.quats, axis=-1), 1.0, atol=1e-12)
        assert np.all(s.quats[..., 0] >= 0)


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(speed_factors=[0.0])
    with pytest.raises(ValueError):
        AugmentConfig(root_rotation_samples=-1)
