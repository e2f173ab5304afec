import math

import numpy as np
import pytest

from conftest import random_sequence
from mvkit.metrics import (
    DegeneratePointSetError,
    JointSequence,
    MetricError,
    accel_error,
    evaluate_joints,
    loss_2d,
    loss_3d,
    loss_smpl,
    mpjpe,
    pa_mpjpe,
    procrustes_align,
    sixd_features,
)
from mvkit.rotations import quat_to_matrix, random_quat
from mvkit.sequence import MotionSequence
from oracles import brute_force_similarity


def similarity(rng, P, scale=None):
    R = quat_to_matrix(random_quat(rng))
    s = rng.uniform(0.5, 2.0) if scale is None else scale
    return s * P @ R.T + rng.normal(size=3), R, s


def test_mpjpe_trivial(rng):
    g = rng.normal(size=(4, 24, 3))
    assert mpjpe(g, g) == 0.0
    assert mpjpe(g + np.array([0.3, -2.0, 1.0]), g) < 1e-12


def test_mpjpe_hand_example():
    gt = np.zeros((1, 2, 3))
    pred = gt.copy()
    pred[0, 1] = [0.003, 0.004, 0.0]  # 5 mm
    assert abs(mpjpe(pred, gt) - 2.5) < 1e-12


def test_mpjpe_shape_mismatch(rng):
    with pytest.raises(MetricError):
        mpjpe(rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 4, 3)))


def test_procrustes_identity(rng):
    X = rng.normal(size=(10, 3))
    aligned, tf = procrustes_align(X, X)
    assert np.array_equal(aligned, X)
    assert np.array_equal(tf.rotation, np.eye(3)) and tf.scale == 1.0


def test_procrustes_recovers_similarity(rng):
    for _ in range(20):
        X = rng.normal(size=(rng.integers(4, 25), 3))
        Y, R, _ = similarity(rng, X, scale=2.0)
        aligned, tf = procrustes_align(X, Y)
        assert np.linalg.norm(aligned - Y, axis=1).mean() * 1000 < 1e-9
        assert abs(tf.scale - 2.0) < 1e-12
        np.testing.assert_allclose(tf.rotation, R, atol=1e-12)


def test_procrustes_reflection_case():
    X = np.array([[0.0, 0, 0], [1, 0, 0], [0, 2, 0], [0, 0, 3], [1, 1, 0.5]])  # chiral
    Y = X * [-1, 1, 1]
    aligned, tf = procrustes_align(X, Y)
    res = np.sum((aligned - Y) ** 2)
    assert res > 1e-3
    assert abs(np.linalg.det(tf.rotation) - 1.0) < 1e-12
    bf_res = brute_force_similarity(X, Y)[0]
    assert bf_res > 1e-3  # no proper rotation reaches zero either
    assert res <= bf_res * (1 + 1e-9)
    assert bf_res <= res * 1.01


def test_procrustes_matches_brute_force(rng):
    for J in (3, 4, 4, 5, 5):
        X, Y = rng.normal(size=(2, J, 3))
        aligned, _ = procrustes_align(X, Y)
        ours = np.sum((aligned - Y) ** 2)
        bf = brute_force_similarity(X, Y)[0]
        assert ours <= bf * (1 + 1e-9)
        assert abs(bf - ours) <= 0.01 * ours


def test_procrustes_degenerate():
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(DegeneratePointSetError):
        procrustes_align(line, np.random.default_rng(0).normal(size=(5, 3)))
    with pytest.raises(DegeneratePointSetError):
        procrustes_align(np.ones((4, 3)), np.zeros((4, 3)))
    with pytest.raises(DegeneratePointSetError):
        procrustes_align(np.zeros((2, 3)), np.zeros((2, 3)))


def test_pa_mpjpe_zero_for_similar_frames(rng):
    gt = rng.normal(size=(6, 24, 3))
    pred = np.stack([similarity(rng, f)[0] for f in gt])
    assert pa_mpjpe(pred, gt) < 1e-9


def test_pa_mpjpe_not_above_mpjpe(rng):
    for _ in range(200):
        J = int(rng.integers(4, 25))
        gt = rng.normal(size=(1, J, 3))
        pred = gt + rng.normal(0, rng.uniform(0.01, 1.0), size=gt.shape)
        assert pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-9


def test_pa_mpjpe_invariant_to_pred_similarity(rng):
    gt, pred = rng.normal(size=(2, 3, 10, 3))
    moved = np.stack([similarity(rng, f)[0] for f in pred])
    assert abs(pa_mpjpe(moved, gt) - pa_mpjpe(pred, gt)) < 1e-9


def test_accel_zero_cases(rng):
    gt = rng.normal(0, 0.5, size=(30, 24, 3))
    assert accel_error(gt, gt, fps=30) == 0.0
    t = np.arange(30)[:, None, None]
    drift = gt + 0.01 * t * rng.normal(size=(1, 24, 3)) + 0.1 * rng.normal(size=(1, 24, 3))
    assert accel_error(drift, gt, fps=30) < 1e-9


def test_accel_invariant_to_shared_affine(rng):
    gt, pred = rng.normal(size=(2, 15, 4, 3))
    aff = np.arange(15)[:, None, None] * rng.normal(size=(1, 4, 3)) + rng.normal(size=(1, 4, 3))
    assert abs(accel_error(pred + aff, gt + aff, fps=30) - accel_error(pred, gt, fps=30)) < 1e-6


def test_accel_sinusoid():
    A, f, fps, T = 0.05, 2.0, 30.0, 61
    t = np.arange(T) / fps
    pred = np.zeros((T, 1, 3))
    pred[:, 0, 1] = A * np.sin(2 * math.pi * f * t)
    gt = np.zeros_like(pred)
    mean_abs_sin = np.abs(np.sin(2 * math.pi * f * t[1:-1])).mean()
    discrete = 4 * math.sin(math.pi * f / fps) ** 2 * fps**2 * A * mean_abs_sin * 1000
    analytic = (2 * math.pi * f) ** 2 * A * mean_abs_sin * 1000
    got = accel_error(JointSequence(pred, fps), JointSequence(gt, fps))
    assert abs(got - discrete) <= 1e-9 * discrete
    x = 2 * math.pi * f / fps
    assert abs(got - analytic) / analytic <= x * x / 12 * 1.01


def test_accel_errors(rng):
    with pytest.raises(MetricError):
        accel_error(rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 3)), fps=30)
    with pytest.raises(MetricError):
        accel_error(JointSequence(np.zeros((4, 2, 3)), 30), JointSequence(np.zeros((4, 2, 3)), 25))
    with pytest.raises(MetricError):
        accel_error(np.zeros((4, 2, 3)), np.zeros((4, 2, 3)))


def test_metrics_nonnegative_and_symmetric(rng):
    a, b = rng.normal(size=(2, 5, 6, 3))
    for fn in (mpjpe, lambda x, y: accel_error(x, y, fps=30)):
        assert fn(a, b) > 0
        assert abs(fn(a, b) - fn(b, a)) < 1e-9


def test_compensated_sum_is_order_independent(rng):
    a, b = rng.normal(size=(2, 50, 24, 3))
    perm = rng.permutation(50)
    assert abs(mpjpe(a, b) - mpjpe(a[perm], b[perm])) < 1e-12


def test_loss_3d():
    z = np.zeros((1, 1, 3))
    assert loss_3d(z, z) == 0.0
    assert loss_3d(np.array([[[3.0, 4.0, 0.0]]]), z) == 5.0


def test_loss_3d_sum_identity(rng):
    a, b = rng.normal(size=(2, 7, 5, 3))
    T, J = 7, 5
    mean = np.linalg.norm(a - b, axis=-1).mean()
    assert abs(loss_3d(a, b) - T * J * mean) < 1e-10


def test_loss_2d(rng):
    z = np.zeros((1, 1, 2))
    assert loss_2d(z, z) == 0.0
    assert loss_2d(np.array([[[3.0, 4.0]]]), z) == 5.0
    a, b = rng.normal(size=(2, 4, 6, 2))
    assert abs(loss_2d(a, b) - 24 * np.linalg.norm(a - b, axis=-1).mean()) < 1e-10


def test_loss_smpl():
    base = random_sequence(1, frames=4)
    assert loss_smpl(base, base) == 0.0
    betas = base.betas.copy()
    betas[0] += np.eye(10)[3]
    assert abs(loss_smpl(base.copy(betas=betas), base) - 1.0) < 1e-15


def test_loss_smpl_flattened_oracle():
    a, b = random_sequence(1, frames=5), random_sequence(2, frames=5)
    # flattened first-two-columns vector per frame
    fa = np.stack([np.concatenate([quat_to_matrix(q)[:, c] for c in (0, 1)], axis=-1) for q in a.quats[:, 0]])
    np.testing.assert_allclose(fa, sixd_features(a)[:, :6], atol=1e-15)
    per_frame = [np.linalg.norm(sixd_features(a)[t] - sixd_features(b)[t]) for t in range(5)]
    expected = np.linalg.norm(a.betas[0] - b.betas[0]) + sum(per_frame)
    assert abs(loss_smpl(a, b) - expected) < 1e-12


def test_loss_smpl_missing_betas():
    a = random_sequence(1, frames=3, betas=False)
    b = a.copy(betas=np.tile(np.eye(10)[0] * 2.0, (3, 1)))
    assert abs(loss_smpl(a, b) - 2.0) < 1e-15


def test_evaluate_joints_report(rng):
    g = JointSequence(rng.normal(size=(5, 24, 3)), 25.0)
    rep = evaluate_joints(g, g, per_frame=True)
    assert rep.to_json() == dict(mpjpe_mm=0.0, pa_mpjpe_mm=0.0, accel_err_mm_s2=0.0, frames=5, joints=24, fps=25.0)
    assert len(rep.per_frame["mpjpe_mm"]) == 5 and len(rep.per_frame["accel_err_mm_s2"]) == 3
