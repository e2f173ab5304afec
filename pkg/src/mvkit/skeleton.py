"""Kinematic-tree body model: forward kinematics and weak-perspective projection.

Joint positions come from the tree itself: each joint sits at its parent's
position plus the parent's global rotation applied to the bone offset. Shape
coefficients act linearly on the bone offsets through an optional basis.

Skeleton file grammar (UTF-8, ``#`` starts a comment)::

    joint_count = 24
    parents = -1, 0, 0, ...          # one entry per joint, root is -1
    mirror = 0, 2, 1, ...            # left/right permutation
    names = pelvis, left_hip, ...    # optional
    [offsets]                        # joint_count rows of "x y z" (meters)
    0.0 0.0 0.0
    ...
    [shape_basis]                    # optional, joint_count*3 rows of 10 reals,
    ...                              # row j*3+c holds d offset[j, c] / d beta

Unknown keys and sections are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .rotations import quat_to_matrix
from .sequence import NUM_BETAS, MotionSequence, PoseFrame

SMPL_JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)
SMPL_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)


class SkeletonError(ValueError):
    """Invalid skeleton definition or skeleton file.

    ``field`` names the offending key when known.
    """

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


@dataclass(frozen=True, eq=False)
class Skeleton:
    parents: tuple
    offsets: np.ndarray
    mirror: tuple
    shape_basis: Optional[np.ndarray] = None
    names: Optional[tuple] = None

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        mirror = tuple(int(m) for m in self.mirror)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "mirror", mirror)
        J = len(parents)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if offsets.shape != (J, 3):
            raise SkeletonError(f"expected ({J}, 3), got {offsets.shape}", "offsets")
        if not np.all(np.isfinite(offsets)):
            raise SkeletonError("non-finite value", "offsets")
        object.__setattr__(self, "offsets", offsets)
        if self.shape_basis is not None:
            basis = np.asarray(self.shape_basis, dtype=np.float64)
            if basis.shape != (J, 3, NUM_BETAS):
                raise SkeletonError(f"expected ({J}, 3, {NUM_BETAS}), got {basis.shape}", "shape_basis")
            object.__setattr__(self, "shape_basis", basis)
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != J:
                raise SkeletonError(f"expected {J} names, got {len(names)}", "names")
            object.__setattr__(self, "names", names)
        _validate_tree(parents)
        _validate_mirror(mirror, J)

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    def equals(self, other: "Skeleton") -> bool:
        basis_same = (self.shape_basis is None and other.shape_basis is None) or (
            self.shape_basis is not None
            and other.shape_basis is not None
            and np.array_equal(self.shape_basis, other.shape_basis)
        )
        return (
            self.parents == other.parents
            and self.mirror == other.mirror
            and np.array_equal(self.offsets, other.offsets)
            and basis_same
            and self.names == other.names
        )


def _validate_tree(parents: tuple) -> None:
    J = len(parents)
    if J == 0:
        raise SkeletonError("empty skeleton", "parents")
    for j, p in enumerate(parents):
        if p != -1 and not 0 <= p < J:
            raise SkeletonError(f"joint {j} has out-of-range parent {p}", "parents")
        if p == j:
            raise SkeletonError(f"cycle: joint {j} is its own parent", "parents")
    for j in range(J):
        seen = {j}
        k = parents[j]
        while k != -1:
            if k in seen:
                raise SkeletonError(f"cycle through joint {j}", "parents")
            seen.add(k)
            k = parents[k]
    roots = [j for j, p in enumerate(parents) if p == -1]
    if len(roots) != 1:
        raise SkeletonError(f"expected exactly one root, found {len(roots)}", "parents")
    for j, p in enumerate(parents):
        if p >= j:
            raise SkeletonError(f"joint {j} precedes its parent {p} (not topologically ordered)", "parents")


def _validate_mirror(mirror: tuple, J: int) -> None:
    if len(mirror) != J:
        raise SkeletonError(f"expected {J} entries, got {len(mirror)}", "mirror")
    if sorted(mirror) != list(range(J)):
        raise SkeletonError("not a permutation", "mirror")
    for j, m in enumerate(mirror):
        if mirror[m] != j:
            raise SkeletonError(f"not an involution at joint {j}", "mirror")


@dataclass(frozen=True)
class WeakPerspectiveCamera:
    s: float
    t_x: float = 0.0
    t_y: float = 0.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"camera scale must be positive, got {self.s}")


def project_weak_perspective(joints3d, cam: WeakPerspectiveCamera) -> np.ndarray:
    """``(x, y, z) -> (s*x + t_x, s*y + t_y)``; works on any (..., 3) array."""
    j = np.asarray(joints3d, dtype=np.float64)
    return cam.s * j[..., :2] + np.array([cam.t_x, cam.t_y])


def bone_offsets(skel: Skeleton, betas=None) -> np.ndarray:
    """Rest offsets plus the linear shape delta; (J, 3) or (T, J, 3) for batched betas."""
    if betas is None:
        return skel.offsets
    if skel.shape_basis is None:
        raise SkeletonError("betas given but skeleton has no shape basis", "shape_basis")
    b = np.asarray(betas, dtype=np.float64)
    return skel.offsets + np.einsum("jck,...k->...jc", skel.shape_basis, b)


def fk_batch(skel: Skeleton, quats, betas=None, root_translation=None) -> np.ndarray:
    """Forward kinematics for a batch of poses.

    Args:
        quats: (T, J, 4) unit quaternions.
        betas: optional (T, 10).
        root_translation: optional (T, 3).

    Returns:
        (T, J, 3) joint positions in meters.
    """
    q = np.asarray(quats, dtype=np.float64)
    T, J = q.shape[:2]
    if J != skel.joint_count:
        raise SkeletonError(f"pose has {J} joints, skeleton has {skel.joint_count}", "joint_count")
    rot = quat_to_matrix(q)
    offs = np.broadcast_to(bone_offsets(skel, betas), (T, J, 3))
    glob = np.empty_like(rot)
    pos = np.zeros((T, J, 3))
    glob[:, 0] = rot[:, 0]
    if root_translation is not None:
        pos[:, 0] = root_translation
    for j in range(1, J):
        p = skel.parents[j]
        glob[:, j] = glob[:, p] @ rot[:, j]
        pos[:, j] = pos[:, p] + np.einsum("tij,tj->ti", glob[:, p], offs[:, j])
    return pos


def forward_kinematics(skel: Skeleton, frame: PoseFrame) -> np.ndarray:
    """(J, 3) joint positions for a single frame."""
    betas = None if frame.betas is None else frame.betas[None]
    trans = None if frame.root_translation is None else frame.root_translation[None]
    return fk_batch(skel, frame.quats()[None], betas, trans)[0]


def fk_sequence(skel: Skeleton, seq: MotionSequence) -> np.ndarray:
    return fk_batch(skel, seq.quats, seq.betas, seq.root_translation)


_LEFT_OFFSETS = {
    1: (0.06, -0.09, 0.0),
    4: (0.04, -0.38, 0.0),
    7: (-0.01, -0.4, -0.04),
    10: (0.04, -0.06, 0.12),
    13: (0.08, 0.12, -0.02),
    16: (0.12, 0.04, -0.01),
    18: (0.26, 0.0, -0.02),
    20: (0.25, 0.01, 0.0),
    22: (0.08, -0.01, -0.01),
}
_MIDLINE_OFFSETS = {
    0: (0.0, 0.0, 0.0),
    3: (0.0, 0.11, -0.02),
    6: (0.0, 0.135, 0.01),
    9: (0.0, 0.055, 0.0),
    12: (0.0, 0.21, -0.03),
    15: (0.0, 0.09, 0.05),
}
_LEG_JOINTS = (4, 5, 7, 8)


def default_skeleton() -> Skeleton:
    """24-joint SMPL topology with synthetic, left/right symmetric offsets.

    y is up and +x is the body's left. The shape basis is synthetic too:
    beta[0] scales every bone by 10 % per unit, beta[1] scales widths (x),
    beta[2] lengthens the legs; the rest are zero.
    """
    J = len(SMPL_PARENTS)
    mirror = list(range(J))
    offsets = np.zeros((J, 3))
    for j, off in _MIDLINE_OFFSETS.items():
        offsets[j] = off
    for j, off in _LEFT_OFFSETS.items():
        offsets[j] = off
        offsets[j + 1] = (-off[0], off[1], off[2])
        mirror[j], mirror[j + 1] = j + 1, j
    basis = np.zeros((J, 3, NUM_BETAS))
    basis[:, :, 0] = 0.1 * offsets
    basis[:, 0, 1] = 0.1 * offsets[:, 0]
    for j in _LEG_JOINTS:
        basis[j, 1, 2] = 0.1 * offsets[j, 1]
    return Skeleton(SMPL_PARENTS, offsets, tuple(mirror), basis, SMPL_JOINT_NAMES)


def bundled_skeleton_path() -> Path:
    return Path(str(resources.files("mvkit") / "data" / "smpl24.skel"))


# text format


def format_skeleton(skel: Skeleton) -> str:
    lines = [
        "# mvkit skeleton",
        f"joint_count = {skel.joint_count}",
        "parents = " + ", ".join(str(p) for p in skel.parents),
        "mirror = " + ", ".join(str(m) for m in skel.mirror),
    ]
    if skel.names is not None:
        lines.append("names = " + ", ".join(skel.names))
    lines.append("[offsets]")
    lines += [" ".join(repr(float(v)) for v in row) for row in skel.offsets]
    if skel.shape_basis is not None:
        lines.append("[shape_basis]")
        lines += [" ".join(repr(float(v)) for v in row) for row in skel.shape_basis.reshape(-1, NUM_BETAS)]
    return "\n".join(lines) + "\n"


def save_skeleton(skel: Skeleton, path) -> None:
    Path(path).write_text(format_skeleton(skel), encoding="utf-8")


_SCALAR_KEYS = ("joint_count", "parents", "mirror", "names")
_SECTIONS = ("offsets", "shape_basis")


def _int_list(text: str, key: str) -> list:
    try:
        return [int(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise SkeletonError(f"expected comma-separated integers ({exc})", key) from None


def parse_skeleton(text: str) -> Skeleton:
    keys: dict = {}
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise SkeletonError(f"unknown section on line {lineno}", current)
            if current in sections:
                raise SkeletonError(f"duplicate section on line {lineno}", current)
            sections[current] = []
            continue
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in _SCALAR_KEYS:
                raise SkeletonError(f"unknown key on line {lineno}", key)
            if key in keys:
                raise SkeletonError(f"duplicate key on line {lineno}", key)
            keys[key] = value
            current = None
            continue
        if current is None:
            raise SkeletonError(f"unexpected content on line {lineno}: {line!r}")
        try:
            sections[current].append([float(tok) for tok in line.split()])
        except ValueError:
            raise SkeletonError(f"non-numeric row on line {lineno}", current) from None

    for key in ("joint_count", "parents", "mirror"):
        if key not in keys:
            raise SkeletonError("missing", key)
    if "offsets" not in sections:
        raise SkeletonError("missing", "offsets")
    try:
        J = int(keys["joint_count"])
    except ValueError:
        raise SkeletonError(f"not an integer: {keys['joint_count']!r}", "joint_count") from None
    parents = _int_list(keys["parents"], "parents")
    mirror = _int_list(keys["mirror"], "mirror")
    if len(parents) != J:
        raise SkeletonError(f"expected {J} entries, got {len(parents)}", "parents")
    rows = sections["offsets"]
    if len(rows) != J or any(len(r) != 3 for r in rows):
        raise SkeletonError(f"expected {J} rows of 3 reals", "offsets")
    basis = None
    if "shape_basis" in sections:
        brows = sections["shape_basis"]
        if len(brows) != 3 * J or any(len(r) != NUM_BETAS for r in brows):
            raise SkeletonError(f"expected {3 * J} rows of {NUM_BETAS} reals", "shape_basis")
        basis = np.array(brows).reshape(J, 3, NUM_BETAS)
    names = None
    if "names" in keys:
        names = tuple(n.strip() for n in keys["names"].split(","))
    return Skeleton(tuple(parents), np.array(rows), tuple(mirror), basis, names)


def load_skeleton(path) -> Skeleton:
    """Read and validate a skeleton file.

    Raises:
        OSError: unreadable file.
        SkeletonError: parse error or invariant violation, naming the field.
    """
    return parse_skeleton(Path(path).read_text(encoding="utf-8"))
