"""Slerp average filter and fixed-width temporal windowing."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .rotations import quat_slerp
from .sequence import MotionSequence, require_temporal

DEFAULT_WINDOW = 90
OVERLAP_POLICIES = ("take_first", "take_last", "slerp_blend")


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSpec:
    width: int = DEFAULT_WINDOW
    stride: int = 0  # 0 means stride == width

    def __post_init__(self):
        if self.stride == 0:
            object.__setattr__(self, "stride", self.width)
        if self.width < 2:
            raise WindowError(f"window width must be >= 2, got {self.width}")
        if not 1 <= self.stride <= self.width:
            raise WindowError(f"stride must be in [1, width], got {self.stride}")


@dataclass(frozen=True)
class WindowIndex:
    """Where each window came from; enough to reassemble the source."""

    total_frames: int
    width: int
    stride: int
    starts: Tuple[int, ...]
    padding: Tuple[int, ...]
    fps: float
    name: str

    def valid_length(self, k: int) -> int:
        return self.width - self.padding[k]

    def to_json(self) -> dict:
        d = asdict(self)
        d["starts"] = list(self.starts)
        d["padding"] = list(self.padding)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "WindowIndex":
        return cls(
            total_frames=int(d["total_frames"]),
            width=int(d["width"]),
            stride=int(d["stride"]),
            starts=tuple(int(s) for s in d["starts"]),
            padding=tuple(int(p) for p in d["padding"]),
            fps=float(d["fps"]),
            name=str(d["name"]),
        )


def slerp_average_filter(seq: MotionSequence, ratio: float = 0.5) -> MotionSequence:
    """Replace each frame's joint rotations by ``slerp(q_t, q_{t+1}, ratio)``.

    Reads the original frames only (a single non-recursive pass). The last
    frame has no successor and is kept as is. Translation is untouched.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"filter ratio must be in [0, 1], got {ratio}")
    require_temporal(seq, "slerp_average_filter")
    out = seq.quats.copy()
    out[:-1] = quat_slerp(seq.quats[:-1], seq.quats[1:], ratio)
    if ratio == 0.0:
        out[:-1] = seq.quats[:-1]
    return seq.copy(quats=out, name=f"{seq.name}|avg={ratio:g}")


def window_starts(total: int, spec: WindowSpec) -> List[int]:
    if total <= spec.width:
        return [0]
    n = -(-(total - spec.width) // spec.stride) + 1
    return [k * spec.stride for k in range(n)]


def _take(a, idx):
    return None if a is None else a[idx]


def sliding_windows(seq: MotionSequence, spec: WindowSpec = WindowSpec()) -> Tuple[List[MotionSequence], WindowIndex]:
    """Cut ``seq`` into windows of exactly ``spec.width`` frames.

    A final partial window is padded by repeating the last frame; the pad
    length is recorded in the returned index.
    """
    require_temporal(seq, "sliding_windows")
    T = seq.num_frames
    starts = window_starts(T, spec)
    windows, padding = [], []
    for k, s in enumerate(starts):
        idx = np.minimum(np.arange(s, s + spec.width), T - 1)
        padding.append(max(0, s + spec.width - T))
        windows.append(
            MotionSequence(
                quats=seq.quats[idx],
                fps=seq.fps,
                name=f"{seq.name}|win={k}",
                betas=_take(seq.betas, idx),
                root_translation=_take(seq.root_translation, idx),
                meta=dict(seq.meta),
            )
        )
    index = WindowIndex(T, spec.width, spec.stride, tuple(starts), tuple(padding), seq.fps, seq.name)
    return windows, index


def _check_consistent(windows: Sequence[MotionSequence], index: WindowIndex) -> None:
    if len(windows) != len(index.starts) or len(index.padding) != len(index.starts):
        raise WindowError(f"index describes {len(index.starts)} windows, got {len(windows)}")
    if not index.starts or index.starts[0] != 0:
        raise WindowError("first window must start at frame 0")
    end = 0
    for k, (w, s, pad) in enumerate(zip(windows, index.starts, index.padding)):
        if w.num_frames != index.width:
            raise WindowError(f"window {k} has {w.num_frames} frames, index says {index.width}")
        if not 0 <= pad < index.width:
            raise WindowError(f"window {k}: padding {pad} out of range")
        if s > end:
            raise WindowError(f"window {k} starts at {s}, leaving a gap after frame {end}")
        if k and s <= index.starts[k - 1]:
            raise WindowError(f"window {k} start {s} is not increasing")
        end = max(end, s + index.width - pad)
    if end != index.total_frames:
        raise WindowError(f"windows cover {end} frames, index says {index.total_frames}")
    first = windows[0]
    for k, w in enumerate(windows):
        if w.joint_count != first.joint_count or (w.betas is None) != (first.betas is None) or (
            w.root_translation is None
        ) != (first.root_translation is None):
            raise WindowError(f"window {k} layout differs from window 0")


def stitch_windows(
    windows: Sequence[MotionSequence], index: WindowIndex, overlap_policy: str = "take_first"
) -> MotionSequence:
    """Reassemble windows; padding is dropped and overlaps resolved by policy.

    ``slerp_blend`` crossfades from the earlier to the later window with a
    weight rising linearly across the overlap (exclusive of both ends).
    Windows are folded in left to right.
    """
    if overlap_policy not in OVERLAP_POLICIES:
        raise WindowError(f"unknown overlap policy {overlap_policy!r}; choose from {OVERLAP_POLICIES}")
    _check_consistent(windows, index)
    T = index.total_frames
    first = windows[0]
    J = first.joint_count
    quats = np.empty((T, J, 4))
    betas = None if first.betas is None else np.empty((T, first.betas.shape[1]))
    trans = None if first.root_translation is None else np.empty((T, 3))
    filled = 0
    for k, (w, s) in enumerate(zip(windows, index.starts)):
        n = index.valid_length(k)
        stop = s + n
        ov = max(0, min(filled, stop) - s)
        new = slice(s + ov, stop)
        src = slice(ov, n)
        quats[new] = w.quats[src]
        if betas is not None:
            betas[new] = w.betas[src]
        if trans is not None:
            trans[new] = w.root_translation[src]
        if ov and overlap_policy == "take_last":
            quats[s : s + ov] = w.quats[:ov]
            if betas is not None:
                betas[s : s + ov] = w.betas[:ov]
            if trans is not None:
                trans[s : s + ov] = w.root_translation[:ov]
        elif ov and overlap_policy == "slerp_blend":
            wt = np.arange(1, ov + 1) / (ov + 1.0)
            quats[s : s + ov] = quat_slerp(quats[s : s + ov], w.quats[:ov], np.broadcast_to(wt[:, None], (ov, J)))
            if betas is not None:
                betas[s : s + ov] += wt[:, None] * (w.betas[:ov] - betas[s : s + ov])
            if trans is not None:
                trans[s : s + ov] += wt[:, None] * (w.root_translation[:ov] - trans[s : s + ov])
        filled = max(filled, stop)
    return MotionSequence(
        quats=quats, fps=index.fps, name=index.name, betas=betas, root_translation=trans, meta=dict(first.meta)
    )
