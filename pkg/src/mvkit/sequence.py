"""Pose frames and motion sequences.

A :class:`MotionSequence` stores its frames as arrays: canonical unit
quaternions ``(T, J, 4)``, optional per-frame betas ``(T, 10)`` and optional
root translations ``(T, 3)`` in meters. :class:`PoseFrame` is the per-frame
view of the same data.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .rotations import Rotation, canonicalize_quat, to_quat

NUM_BETAS = 10


class SequenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PoseFrame:
    """One time step: joint rotations (root in world frame, the rest local)."""

    rotations: tuple
    betas: Optional[np.ndarray] = None
    root_translation: Optional[np.ndarray] = None

    def __post_init__(self):
        rots = tuple(r if isinstance(r, Rotation) else Rotation("quaternion", r) for r in self.rotations)
        object.__setattr__(self, "rotations", rots)
        if self.betas is not None:
            b = np.asarray(self.betas, dtype=np.float64)
            if b.shape != (NUM_BETAS,):
                raise SequenceError(f"betas: expected {NUM_BETAS} values, got shape {b.shape}")
            object.__setattr__(self, "betas", b)
        if self.root_translation is not None:
            t = np.asarray(self.root_translation, dtype=np.float64)
            if t.shape != (3,):
                raise SequenceError(f"root_translation: expected 3 values, got shape {t.shape}")
            object.__setattr__(self, "root_translation", t)

    @property
    def joint_count(self) -> int:
        return len(self.rotations)

    def quats(self) -> np.ndarray:
        return np.stack([r.as_quat() for r in self.rotations])


@dataclass(eq=False)
class MotionSequence:
    quats: np.ndarray
    fps: float
    name: str = "sequence"
    betas: Optional[np.ndarray] = None
    root_translation: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        q = np.asarray(self.quats, dtype=np.float64)
        if q.ndim != 3 or q.shape[-1] != 4:
            raise SequenceError(f"quats: expected (T, J, 4), got shape {q.shape}")
        if q.shape[0] < 1:
            raise SequenceError("sequence has no frames")
        if not np.all(np.isfinite(q)):
            raise SequenceError("quats: non-finite values")
        n = np.linalg.norm(q, axis=-1, keepdims=True)
        if np.any(n == 0.0):
            raise SequenceError("quats: zero-norm quaternion")
        # keep already-unit values bitwise; renormalise only visible drift
        q = np.where(np.abs(n - 1.0) > 1e-12, q / n, q)
        self.quats = canonicalize_quat(q)
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise SequenceError(f"fps must be positive, got {self.fps}")
        self.fps = float(self.fps)
        T = q.shape[0]
        if self.betas is not None:
            b = np.asarray(self.betas, dtype=np.float64)
            if b.shape != (T, NUM_BETAS):
                raise SequenceError(f"betas: expected ({T}, {NUM_BETAS}), got {b.shape}")
            self.betas = b
        if self.root_translation is not None:
            t = np.asarray(self.root_translation, dtype=np.float64)
            if t.shape != (T, 3):
                raise SequenceError(f"root_translation: expected ({T}, 3), got {t.shape}")
            if not np.all(np.isfinite(t)):
                raise SequenceError("root_translation: non-finite values")
            self.root_translation = t

    @classmethod
    def from_frames(cls, frames: Sequence[PoseFrame], fps: float, name: str = "sequence") -> "MotionSequence":
        if not frames:
            raise SequenceError("no frames")
        J = frames[0].joint_count
        has_b = frames[0].betas is not None
        has_t = frames[0].root_translation is not None
        for i, f in enumerate(frames):
            if f.joint_count != J:
                raise SequenceError(f"frame {i}: joint count {f.joint_count} != {J}")
            if (f.betas is not None) != has_b or (f.root_translation is not None) != has_t:
                raise SequenceError(f"frame {i}: betas/translation presence differs from frame 0")
        return cls(
            quats=np.stack([f.quats() for f in frames]),
            fps=fps,
            name=name,
            betas=np.stack([f.betas for f in frames]) if has_b else None,
            root_translation=np.stack([f.root_translation for f in frames]) if has_t else None,
        )

    @classmethod
    def from_rotations(cls, values, kind: str, fps: float, **kw) -> "MotionSequence":
        return cls(quats=to_quat(values, kind), fps=fps, **kw)

    @property
    def num_frames(self) -> int:
        return self.quats.shape[0]

    @property
    def joint_count(self) -> int:
        return self.quats.shape[1]

    def __len__(self) -> int:
        return self.num_frames

    def frame(self, t: int) -> PoseFrame:
        return PoseFrame(
            rotations=tuple(Rotation("quaternion", q) for q in self.quats[t]),
            betas=None if self.betas is None else self.betas[t],
            root_translation=None if self.root_translation is None else self.root_translation[t],
        )

    @property
    def frames(self) -> list:
        return [self.frame(t) for t in range(self.num_frames)]

    def slice(self, start: int, stop: int) -> "MotionSequence":
        return replace(
            self,
            quats=self.quats[start:stop],
            betas=None if self.betas is None else self.betas[start:stop],
            root_translation=None if self.root_translation is None else self.root_translation[start:stop],
            meta=dict(self.meta),
        )

    def copy(self, **changes) -> "MotionSequence":
        base = dict(
            quats=self.quats.copy(),
            fps=self.fps,
            name=self.name,
            betas=None if self.betas is None else self.betas.copy(),
            root_translation=None if self.root_translation is None else self.root_translation.copy(),
            meta=dict(self.meta),
        )
        base.update(changes)
        return MotionSequence(**base)

    def equals(self, other: "MotionSequence") -> bool:
        """Bitwise equality of all arrays plus fps."""

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.fps == other.fps
            and same(self.quats, other.quats)
            and same(self.betas, other.betas)
            and same(self.root_translation, other.root_translation)
        )


def require_temporal(seq: MotionSequence, what: str) -> None:
    if seq.num_frames < 2:
        raise SequenceError(f"{what}: needs at least 2 frames, got {seq.num_frames}")
