"""Motion augmentation: resampling in time, left/right mirroring, random root rotation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np

from .rotations import canonicalize_quat, quat_mul, quat_rotate, quat_slerp, random_quat
from .sequence import MotionSequence, SequenceError, require_temporal
from .skeleton import Skeleton, SkeletonError


@dataclass
class AugmentConfig:
    speed_factors: List[float] = field(default_factory=list)
    enable_flip: bool = False
    root_rotation_samples: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        self.speed_factors = [float(f) for f in self.speed_factors]
        for f in self.speed_factors:
            if not (math.isfinite(f) and f > 0):
                raise ValueError(f"speed factor must be positive, got {f}")
        if self.root_rotation_samples < 0:
            raise ValueError("root_rotation_samples must be >= 0")


def resample(seq: MotionSequence, factor: float) -> MotionSequence:
    """Play ``seq`` ``factor`` times faster at the same frame rate.

    Output frame ``k`` samples the input at time ``k * factor`` (clamped to
    the last frame): rotations by shortest-arc slerp between neighbours,
    translation and betas linearly.
    """
    if not (math.isfinite(factor) and factor > 0):
        raise ValueError(f"resample factor must be positive, got {factor}")
    require_temporal(seq, "resample")
    T = seq.num_frames
    n_out = max(2, int(math.floor(T / factor + 0.5)))
    times = np.minimum(np.arange(n_out) * factor, T - 1)
    lo = np.floor(times).astype(int)
    frac = times - lo
    hi = np.minimum(lo + 1, T - 1)

    quats = quat_slerp(seq.quats[lo], seq.quats[hi], np.broadcast_to(frac[:, None], (n_out, seq.joint_count)))
    exact = frac == 0.0
    quats[exact] = seq.quats[lo[exact]]

    def lerp(a):
        if a is None:
            return None
        out = a[lo] + frac[:, None] * (a[hi] - a[lo])
        out[exact] = a[lo[exact]]
        return out

    tag = f"speed={factor:g}"
    return MotionSequence(
        quats=quats,
        fps=seq.fps,
        name=f"{seq.name}|{tag}",
        betas=lerp(seq.betas),
        root_translation=lerp(seq.root_translation),
        meta=dict(seq.meta),
    )


# conjugation by diag(-1, 1, 1) negates the y and z quaternion components
_MIRROR_QUAT = np.array([1.0, 1.0, -1.0, -1.0])


def flip_lr(seq: MotionSequence, skel: Skeleton) -> MotionSequence:
    """Mirror the motion across the sagittal (x = 0) plane."""
    if len(skel.mirror) != seq.joint_count:
        raise SkeletonError(
            f"mirror map has {len(skel.mirror)} entries, sequence has {seq.joint_count} joints", "mirror"
        )
    perm = np.asarray(skel.mirror)
    quats = seq.quats[:, perm] * _MIRROR_QUAT
    trans = None
    if seq.root_translation is not None:
        trans = seq.root_translation * np.array([-1.0, 1.0, 1.0])
    name = seq.name[: -len("|flip")] if seq.name.endswith("|flip") else f"{seq.name}|flip"
    return MotionSequence(
        quats=quats,
        fps=seq.fps,
        name=name,
        betas=None if seq.betas is None else seq.betas.copy(),
        root_translation=trans,
        meta=dict(seq.meta),
    )


def sample_root_rotation(rng_seed: int) -> np.ndarray:
    return random_quat(np.random.default_rng(rng_seed))


def random_root_rotation(seq: MotionSequence, rng_seed: int) -> MotionSequence:
    """Left-multiply every root rotation by one uniformly drawn rotation.

    The root translation is rotated by the same rotation so the whole
    trajectory is expressed in the new world frame.
    """
    Q = sample_root_rotation(rng_seed)
    quats = seq.quats.copy()
    quats[:, 0] = canonicalize_quat(quat_mul(Q, seq.quats[:, 0]))
    trans = None
    if seq.root_translation is not None:
        trans = quat_rotate(np.broadcast_to(Q, (seq.num_frames, 4)), seq.root_translation)
    return MotionSequence(
        quats=quats,
        fps=seq.fps,
        name=f"{seq.name}|rr={rng_seed}",
        betas=None if seq.betas is None else seq.betas.copy(),
        root_translation=trans,
        meta=dict(seq.meta),
    )


def derive_seed(base: int, *path: int) -> int:
    """64-bit seed for one output of the expansion, independent of scheduling."""
    state = np.random.SeedSequence([base & 0xFFFFFFFFFFFFFFFF, *path]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def augment_dataset(
    seqs: Iterable[MotionSequence], cfg: AugmentConfig, skel: Optional[Skeleton] = None
) -> List[MotionSequence]:
    """Cartesian expansion: speed factors x {as-is, flipped} x root-rotation samples.

    Each enabled axis replaces the identity: two speed factors give two
    variants (include 1.0 to keep the original timing), ``n`` root-rotation
    samples give ``n`` rotated copies. Disabled axes contribute one variant.
    """
    seqs = list(seqs)
    if cfg.enable_flip and skel is None:
        raise ValueError("flip augmentation needs a skeleton")
    speeds = cfg.speed_factors or [None]
    flips = (False, True) if cfg.enable_flip else (False,)
    n_rot = cfg.root_rotation_samples
    out = []
    for i, seq in enumerate(seqs):
        for si, factor in enumerate(speeds):
            base = seq if factor is None else resample(seq, factor)
            for flip in flips:
                cur = flip_lr(base, skel) if flip else base
                if n_rot == 0:
                    out.append(cur)
                    continue
                for k in range(n_rot):
                    out.append(random_root_rotation(cur, derive_seed(cfg.rng_seed, i, si, int(flip), k)))
    return out
