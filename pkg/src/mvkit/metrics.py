"""Pose-estimation metrics and training losses over joint-position sequences.

Positions are meters; reported metrics are millimeters (mm/s^2 for
acceleration). Reductions use compensated summation so results do not
depend on evaluation order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .rotations import quat_to_matrix, matrix_to_sixd
from .sequence import NUM_BETAS, MotionSequence

ROOT_JOINT = 0
M_TO_MM = 1000.0


class MetricError(ValueError):
    pass


class DegeneratePointSetError(MetricError):
    """Procrustes input whose points are (nearly) collinear or coincident."""


@dataclass(frozen=True, eq=False)
class JointSequence:
    positions: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.ndim != 3 or p.shape[-1] != 3 or p.shape[0] < 1:
            raise MetricError(f"positions: expected (T, J, 3) with T >= 1, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise MetricError("positions: non-finite entries")
        if not self.fps > 0:
            raise MetricError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "positions", p)


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """``x -> scale * rotation @ x + translation``."""

    rotation: np.ndarray
    scale: float
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


@dataclass
class MetricsReport:
    mpjpe_mm: float
    pa_mpjpe_mm: float
    accel_err_mm_s2: float
    frames: int
    joints: int
    fps: float
    per_frame: Optional[dict] = None

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("per_frame")
        return d


def fsum_mean(values) -> float:
    v = np.ravel(values)
    return math.fsum(v.tolist()) / v.size


def _positions(x) -> np.ndarray:
    if isinstance(x, JointSequence):
        return x.positions
    p = np.asarray(x, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    return p


def _pair(pred, gt):
    p, g = _positions(pred), _positions(gt)
    if p.shape != g.shape:
        raise MetricError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    return p, g


def per_frame_mpjpe(pred, gt) -> np.ndarray:
    """Root-relative mean joint error per frame, meters."""
    p, g = _pair(pred, gt)
    p = p - p[:, ROOT_JOINT : ROOT_JOINT + 1]
    g = g - g[:, ROOT_JOINT : ROOT_JOINT + 1]
    return np.linalg.norm(p - g, axis=-1).mean(axis=1)


def mpjpe(pred, gt) -> float:
    """Mean per-joint position error after subtracting the root joint, in mm."""
    p, g = _pair(pred, gt)
    p = p - p[:, ROOT_JOINT : ROOT_JOINT + 1]
    g = g - g[:, ROOT_JOINT : ROOT_JOINT + 1]
    return fsum_mean(np.linalg.norm(p - g, axis=-1)) * M_TO_MM


def procrustes_align(pred_frame, gt_frame):
    """Best similarity transform taking ``pred_frame`` onto ``gt_frame``.

    Least squares over rotation, isotropic scale and translation (Umeyama):
    SVD of the cross-covariance with the reflection removed.

    Returns:
        (aligned_pred, SimilarityTransform)

    Raises:
        DegeneratePointSetError: when the centred prediction has rank < 2.
    """
    X = np.asarray(pred_frame, dtype=np.float64)
    Y = np.asarray(gt_frame, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise MetricError(f"expected matching (J, 3) frames, got {X.shape} and {Y.shape}")
    if X.shape[0] < 3:
        raise DegeneratePointSetError(f"need at least 3 points, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise MetricError("non-finite joint positions")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    sx = np.linalg.svd(Xc, compute_uv=False)
    if sx[0] == 0.0 or sx[1] <= 1e-10 * sx[0]:
        raise DegeneratePointSetError("prediction points are collinear or coincident")
    var_x = np.sum(Xc * Xc)
    U, S, Vt = np.linalg.svd(Yc.T @ Xc)
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.array([1.0, 1.0, d if d != 0 else 1.0])
    R = (U * D) @ Vt
    scale = float(np.sum(S * D) / var_x)
    t = my - scale * R @ mx
    if np.array_equal(X, Y):
        # exact match: skip the rounding noise of the SVD path
        return X.copy(), SimilarityTransform(np.eye(3), 1.0, np.zeros(3))
    tf = SimilarityTransform(R, scale, t)
    return tf.apply(X), tf


def per_frame_pa_mpjpe(pred, gt) -> np.ndarray:
    p, g = _pair(pred, gt)
    out = np.empty(p.shape[0])
    for i in range(p.shape[0]):
        aligned, _ = procrustes_align(p[i], g[i])
        out[i] = np.linalg.norm(aligned - g[i], axis=-1).mean()
    return out


def pa_mpjpe(pred, gt) -> float:
    """MPJPE after per-frame Procrustes (similarity) alignment, in mm."""
    p, g = _pair(pred, gt)
    dists = np.empty(p.shape[:2])
    for i in range(p.shape[0]):
        aligned, _ = procrustes_align(p[i], g[i])
        dists[i] = np.linalg.norm(aligned - g[i], axis=-1)
    return fsum_mean(dists) * M_TO_MM


def _fps(pred, gt, fps) -> float:
    seqs = [x.fps for x in (pred, gt) if isinstance(x, JointSequence)]
    if len(seqs) == 2 and seqs[0] != seqs[1]:
        raise MetricError(f"fps mismatch: {seqs[0]} vs {seqs[1]}")
    if fps is None:
        if not seqs:
            raise MetricError("fps required for plain arrays")
        return seqs[0]
    if seqs and seqs[0] != fps:
        raise MetricError(f"fps mismatch: {fps} vs {seqs[0]}")
    return float(fps)


def acceleration(positions, fps: float) -> np.ndarray:
    """Central second difference times fps^2: (T-2, J, 3) for frames 1..T-2."""
    x = np.asarray(positions, dtype=np.float64)
    return (x[2:] - 2.0 * x[1:-1] + x[:-2]) * (fps * fps)


def per_frame_accel_error(pred, gt, fps=None) -> np.ndarray:
    p, g = _pair(pred, gt)
    f = _fps(pred, gt, fps)
    if p.shape[0] < 3:
        raise MetricError(f"acceleration needs at least 3 frames, got {p.shape[0]}")
    return np.linalg.norm(acceleration(p - g, f), axis=-1).mean(axis=1)


def accel_error(pred, gt, fps=None) -> float:
    """Mean norm of the acceleration difference over frames 1..T-2, mm/s^2."""
    p, g = _pair(pred, gt)
    f = _fps(pred, gt, fps)
    if p.shape[0] < 3:
        raise MetricError(f"acceleration needs at least 3 frames, got {p.shape[0]}")
    # second difference is linear, so difference first and skip the cancellation
    diff = acceleration(p - g, f)
    return fsum_mean(np.linalg.norm(diff, axis=-1)) * M_TO_MM


def loss_3d(pred, gt) -> float:
    """Sum over frames and joints of Euclidean joint error (no root alignment)."""
    p, g = _pair(pred, gt)
    return math.fsum(np.linalg.norm(p - g, axis=-1).ravel().tolist())


def loss_2d(pred2d, gt2d) -> float:
    p = np.asarray(pred2d, dtype=np.float64)
    g = np.asarray(gt2d, dtype=np.float64)
    if p.shape != g.shape or p.shape[-1] != 2:
        raise MetricError(f"expected matching (..., 2) arrays, got {p.shape} and {g.shape}")
    return math.fsum(np.linalg.norm(p - g, axis=-1).ravel().tolist())


def sixd_features(seq: MotionSequence) -> np.ndarray:
    """(T, J*6) pose parameters in the 6D encoding."""
    return matrix_to_sixd(quat_to_matrix(seq.quats)).reshape(seq.num_frames, -1)


def loss_smpl(pred: MotionSequence, gt: MotionSequence) -> float:
    """Shape L2 plus per-frame pose L2 (6D encoding), summed over frames.

    Shape is taken from frame 0; a missing betas array counts as zeros.
    """
    if pred.quats.shape != gt.quats.shape:
        raise MetricError(f"layout mismatch: {pred.quats.shape} vs {gt.quats.shape}")

    def shape(seq):
        return np.zeros(NUM_BETAS) if seq.betas is None else seq.betas[0]

    shape_term = float(np.linalg.norm(shape(pred) - shape(gt)))
    pose = np.linalg.norm(sixd_features(pred) - sixd_features(gt), axis=-1)
    return shape_term + math.fsum(pose.tolist())


def evaluate_joints(pred: JointSequence, gt: JointSequence, per_frame: bool = False) -> MetricsReport:
    fps = _fps(pred, gt, None)
    p, g = _pair(pred, gt)
    accel = accel_error(pred, gt) if p.shape[0] >= 3 else 0.0
    pf = None
    if per_frame:
        pf = {
            "mpjpe_mm": (per_frame_mpjpe(p, g) * M_TO_MM).tolist(),
            "pa_mpjpe_mm": (per_frame_pa_mpjpe(p, g) * M_TO_MM).tolist(),
        }
        if p.shape[0] >= 3:
            pf["accel_err_mm_s2"] = (per_frame_accel_error(p, g, fps) * M_TO_MM).tolist()
    return MetricsReport(
        mpjpe_mm=mpjpe(p, g),
        pa_mpjpe_mm=pa_mpjpe(p, g),
        accel_err_mm_s2=accel,
        frames=p.shape[0],
        joints=p.shape[1],
        fps=fps,
        per_frame=pf,
    )
