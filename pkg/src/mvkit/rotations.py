"""Rotation algebra over axis-angle, quaternion, matrix and 6D encodings.

All array functions are vectorised over leading dimensions and work in
float64. Quaternions are ``(w, x, y, z)`` and are returned in canonical
form (``w >= 0``; when ``w == 0`` the first nonzero component is positive).
Matrices act on column vectors. The 6D encoding stores the first two matrix
columns back to back: ``(R00, R10, R20, R01, R11, R21)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REPRESENTATIONS = ("axis_angle", "quaternion", "matrix", "sixd")
_SIZES = {"axis_angle": 3, "quaternion": 4, "matrix": 9, "sixd": 6}

SLERP_PARALLEL_EPS = 1e-9
MATRIX_TOL = 1e-9


class RotationError(ValueError):
    """Invalid rotation input."""


class DegenerateRotationError(RotationError):
    """6D input with a zero or parallel column pair."""


def _as_array(x, last: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.shape[-1:] != (last,):
        raise RotationError(f"{name}: expected trailing dimension {last}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise RotationError(f"{name}: non-finite component")
    return a


def canonicalize_quat(q) -> np.ndarray:
    """Pick the representative of ``±q`` with ``w >= 0`` (ties by first nonzero)."""
    q = np.array(q, dtype=np.float64)
    nonzero = q != 0.0
    first = np.argmax(nonzero, axis=-1)
    lead = np.take_along_axis(q, first[..., None], axis=-1)[..., 0]
    flip = lead < 0.0
    q[flip] = -q[flip]
    return q


def normalize_quat(q) -> np.ndarray:
    q = _as_array(q, 4, "quaternion")
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise RotationError("quaternion: zero norm")
    # unit inputs pass through bitwise so stored quaternions round-trip exactly
    return canonicalize_quat(np.where(np.abs(n - 1.0) > 1e-12, q / n, q))


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (not canonicalised)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vectors ``v`` (..., 3) by unit quaternions ``q``."""
    return np.einsum("...ij,...j->...i", quat_to_matrix(q), np.asarray(v, dtype=np.float64))


def axis_angle_to_quat(aa) -> np.ndarray:
    aa = _as_array(aa, 3, "axis_angle")
    angle = np.linalg.norm(aa, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(half) / angle, finite at zero
    scale = 0.5 * np.sinc(half / np.pi)
    return canonicalize_quat(np.concatenate([np.cos(half), aa * scale], axis=-1))


def quat_to_axis_angle(q) -> np.ndarray:
    q = normalize_quat(q)
    w = q[..., :1]
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(n, w)
    safe_n = np.where(n > 0.0, n, 1.0)
    factor = np.where(n > 0.0, angle / safe_n, 2.0)
    return v * factor


def quat_to_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return m.reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat(R) -> np.ndarray:
    """Shepperd's method: branch on the largest of trace and diagonal."""
    R = np.asarray(R, dtype=np.float64)
    m00, m01, m02 = R[..., 0, 0], R[..., 0, 1], R[..., 0, 2]
    m10, m11, m12 = R[..., 1, 0], R[..., 1, 1], R[..., 1, 2]
    m20, m21, m22 = R[..., 2, 0], R[..., 2, 1], R[..., 2, 2]
    tr = m00 + m11 + m22
    cands = np.stack(
        [
            np.stack([1 + tr, m21 - m12, m02 - m20, m10 - m01], -1),
            np.stack([m21 - m12, 1 + m00 - m11 - m22, m01 + m10, m02 + m20], -1),
            np.stack([m02 - m20, m01 + m10, 1 - m00 + m11 - m22, m12 + m21], -1),
            np.stack([m10 - m01, m02 + m20, m12 + m21, 1 - m00 - m11 + m22], -1),
        ],
        axis=-2,
    )
    choice = np.argmax(np.stack([tr, m00, m11, m22], -1), axis=-1)
    q = np.take_along_axis(cands, choice[..., None, None], axis=-2)[..., 0, :]
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return canonicalize_quat(q)


def matrix_to_sixd(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def sixd_to_matrix(v) -> np.ndarray:
    """Gram-Schmidt decode; the first column is normalised first.

    Raises:
        DegenerateRotationError: if a column is zero or the pair is parallel.
    """
    v = _as_array(v, 6, "sixd")
    a1, a2 = v[..., :3], v[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    n2 = np.linalg.norm(a2, axis=-1, keepdims=True)
    if np.any(n1 == 0.0) or np.any(n2 == 0.0):
        raise DegenerateRotationError("sixd: zero column")
    b1 = a1 / n1
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    nu = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(nu <= 1e-12 * n2):
        raise DegenerateRotationError("sixd: parallel columns")
    b2 = u2 / nu
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def check_matrix(R, tol: float = MATRIX_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise RotationError(f"matrix: expected (..., 3, 3), got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise RotationError("matrix: non-finite component")
    eye = np.eye(3)
    err = np.abs(np.swapaxes(R, -1, -2) @ R - eye).max(initial=0.0)
    if err > tol or np.any(np.abs(np.linalg.det(R) - 1.0) > tol):
        raise RotationError("matrix: not a proper rotation (orthonormal, det +1)")
    return R


def to_quat(value, kind: str) -> np.ndarray:
    """Convert a batch of rotations of representation ``kind`` to quaternions."""
    if kind == "quaternion":
        return normalize_quat(value)
    if kind == "axis_angle":
        return axis_angle_to_quat(value)
    if kind == "matrix":
        v = np.asarray(value, dtype=np.float64)
        if v.shape[-1:] == (9,):
            v = v.reshape(v.shape[:-1] + (3, 3))
        return matrix_to_quat(check_matrix(v))
    if kind == "sixd":
        return matrix_to_quat(sixd_to_matrix(value))
    raise RotationError(f"unknown representation {kind!r}")


def from_quat(q, kind: str) -> np.ndarray:
    """Quaternions to ``kind``; matrices come back as (..., 3, 3)."""
    if kind == "quaternion":
        return canonicalize_quat(q)
    if kind == "axis_angle":
        return quat_to_axis_angle(q)
    if kind == "matrix":
        return quat_to_matrix(q)
    if kind == "sixd":
        return matrix_to_sixd(quat_to_matrix(q))
    raise RotationError(f"unknown representation {kind!r}")


def quat_slerp(a, b, t) -> np.ndarray:
    """Shortest-arc spherical interpolation of unit quaternions.

    ``t`` broadcasts against the leading dimensions of ``a`` and ``b``.
    Falls back to normalised lerp when the endpoints are nearly parallel.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)[..., None]
    dot = np.sum(a * b, axis=-1, keepdims=True)
    b = np.where(dot < 0.0, -b, b)
    dot = np.abs(dot)
    near = dot > 1.0 - SLERP_PARALLEL_EPS
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.where(near, 1.0, np.sin(theta))
    wa = np.where(near, 1.0 - t, np.sin((1.0 - t) * theta) / s)
    wb = np.where(near, t, np.sin(t * theta) / s)
    out = wa * a + wb * b
    out = np.where(near, out / np.linalg.norm(out, axis=-1, keepdims=True), out)
    return canonicalize_quat(out)


def quat_angle(a, b) -> np.ndarray:
    """Geodesic angle between unit quaternions, in [0, pi]."""
    rel = quat_mul(quat_conj(a), b)
    return 2.0 * np.arctan2(np.linalg.norm(rel[..., 1:], axis=-1), np.abs(rel[..., 0]))


def random_quat(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform samples on SO(3) from normalised 4D Gaussians."""
    shape = (4,) if size is None else tuple(np.atleast_1d(size)) + (4,)
    g = rng.standard_normal(shape)
    return canonicalize_quat(g / np.linalg.norm(g, axis=-1, keepdims=True))


# single-rotation tagged API


@dataclass(frozen=True, eq=False)
class Rotation:
    """A single rotation tagged with its representation."""

    kind: str
    value: np.ndarray

    def __post_init__(self):
        if self.kind not in _SIZES:
            raise RotationError(f"unknown representation {self.kind!r}")
        v = np.asarray(self.value, dtype=np.float64).reshape(-1)
        if v.size != _SIZES[self.kind]:
            raise RotationError(f"{self.kind}: expected {_SIZES[self.kind]} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise RotationError(f"{self.kind}: non-finite component")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "value", v)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls("quaternion", np.array([1.0, 0.0, 0.0, 0.0]))

    def as_quat(self) -> np.ndarray:
        return to_quat(self.value, self.kind)

    def as_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.as_quat()) if self.kind != "matrix" else self.value.reshape(3, 3).copy()

    def __repr__(self) -> str:
        return f"Rotation({self.kind!r}, {np.array2string(self.value, precision=6)})"


def convert(r: Rotation, target: str) -> Rotation:
    """Re-express ``r`` in representation ``target``.

    Axis-angle output is the canonical representative with angle in [0, pi].
    """
    if target not in _SIZES:
        raise RotationError(f"unknown representation {target!r}")
    if target == "matrix" and r.kind == "matrix":
        return Rotation("matrix", check_matrix(r.value.reshape(3, 3)).reshape(9))
    if target == "matrix" and r.kind == "sixd":
        return Rotation("matrix", sixd_to_matrix(r.value).reshape(9))
    out = from_quat(r.as_quat(), target)
    return Rotation(target, np.asarray(out).reshape(-1))


def sixd_decode(v) -> Rotation:
    return Rotation("matrix", sixd_to_matrix(v).reshape(9))


def slerp(a: Rotation, b: Rotation, t: float) -> Rotation:
    if not 0.0 <= t <= 1.0:
        raise RotationError(f"slerp: t={t} outside [0, 1]")
    return Rotation("quaternion", quat_slerp(a.as_quat(), b.as_quat(), t))


def geodesic_distance(a: Rotation, b: Rotation) -> float:
    """Angle of ``a^T b`` in radians."""
    return float(quat_angle(a.as_quat(), b.as_quat()))
