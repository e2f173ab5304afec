"""Deterministic synthetic motion with known ground truth.

Kinds:

``constant``
    One random pose (per-joint rotation angles up to ``amplitude``) held for
    every frame.
``single_axis_sine``
    Joint ``joint`` rotates about ``axis`` by
    ``amplitude * sin(2 pi frequency t / fps + phase)``; all other joints stay
    at identity.
``multi_joint_sine``
    Every joint follows its own single-axis sinusoid; the per-joint axes,
    amplitudes, frequencies and phases come from :func:`sine_components`.
``random_walk_slerp``
    Keyframes every ``key_interval`` frames, each a random perturbation (angle
    up to ``amplitude``) of the previous one, joined by slerp.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .rotations import axis_angle_to_quat, canonicalize_quat, quat_mul, quat_slerp, random_quat
from .sequence import MotionSequence

KINDS = ("constant", "single_axis_sine", "multi_joint_sine", "random_walk_slerp")

DEFAULT_PARAMS = dict(
    frames=90,
    fps=30.0,
    joints=24,
    amplitude=0.5,
    frequency=1.0,
    phase=0.0,
    joint=1,
    axis=(1.0, 0.0, 0.0),
    key_interval=10,
    root_speed=0.0,
)


@dataclass(frozen=True)
class SineComponent:
    joint: int
    axis: tuple
    amplitude: float
    frequency: float
    phase: float

    def angle(self, t_seconds):
        return self.amplitude * np.sin(2.0 * np.pi * self.frequency * t_seconds + self.phase)


def _resolve(params: dict) -> dict:
    unknown = set(params) - set(DEFAULT_PARAMS)
    if unknown:
        raise ValueError(f"unknown synthetic parameters: {sorted(unknown)}")
    p = dict(DEFAULT_PARAMS)
    p.update(params)
    if int(p["frames"]) < 1 or not p["fps"] > 0 or int(p["joints"]) < 1:
        raise ValueError("frames and joints must be >= 1 and fps > 0")
    if p["amplitude"] < 0 or p["frequency"] < 0:
        raise ValueError("amplitude and frequency must be >= 0")
    if not 0 <= int(p["joint"]) < int(p["joints"]):
        raise ValueError(f"joint {p['joint']} out of range")
    axis = np.asarray(p["axis"], dtype=np.float64)
    if axis.shape != (3,) or np.linalg.norm(axis) == 0:
        raise ValueError("axis must be a nonzero 3-vector")
    if int(p["key_interval"]) < 1:
        raise ValueError("key_interval must be >= 1")
    return p


def sine_components(params: dict, seed: int) -> List[SineComponent]:
    """Per-joint sinusoids used by ``multi_joint_sine`` (and ``single_axis_sine``)."""
    p = _resolve(params)
    J = int(p["joints"])
    rng = np.random.default_rng(seed)
    axes = rng.standard_normal((J, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    amps = p["amplitude"] * rng.uniform(0.2, 1.0, J)
    freqs = p["frequency"] * rng.uniform(0.5, 1.5, J)
    phases = rng.uniform(0.0, 2.0 * np.pi, J)
    return [SineComponent(j, tuple(axes[j]), float(amps[j]), float(freqs[j]), float(phases[j])) for j in range(J)]


def _sine_quats(comps, t, J):
    q = np.zeros((t.size, J, 4))
    q[..., 0] = 1.0
    for c in comps:
        aa = np.asarray(c.axis)[None] * c.angle(t)[:, None]
        q[:, c.joint] = axis_angle_to_quat(aa)
    return q


def generate_synthetic(kind: str, params: dict | None = None, seed: int = 0) -> MotionSequence:
    if kind not in KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {KINDS}")
    p = _resolve(params or {})
    T, J, fps = int(p["frames"]), int(p["joints"]), float(p["fps"])
    t = np.arange(T) / fps
    rng = np.random.default_rng(seed)

    if kind == "constant":
        aa = rng.standard_normal((J, 3))
        aa *= p["amplitude"] * rng.uniform(0.0, 1.0, (J, 1)) / np.linalg.norm(aa, axis=1, keepdims=True)
        quats = np.broadcast_to(axis_angle_to_quat(aa), (T, J, 4)).copy()
    elif kind == "single_axis_sine":
        axis = np.asarray(p["axis"], dtype=np.float64)
        comp = SineComponent(int(p["joint"]), tuple(axis / np.linalg.norm(axis)), float(p["amplitude"]),
                             float(p["frequency"]), float(p["phase"]))
        quats = _sine_quats([comp], t, J)
    elif kind == "multi_joint_sine":
        quats = _sine_quats(sine_components(p, seed), t, J)
    else:
        k = int(p["key_interval"])
        n_keys = (T - 1) // k + 2
        keys = np.empty((n_keys, J, 4))
        keys[0] = random_quat(rng, J)
        for i in range(1, n_keys):
            step = rng.standard_normal((J, 3))
            step *= p["amplitude"] * rng.uniform(0.0, 1.0, (J, 1)) / np.linalg.norm(step, axis=1, keepdims=True)
            keys[i] = canonicalize_quat(quat_mul(keys[i - 1], axis_angle_to_quat(step)))
        frame = np.arange(T)
        lo = frame // k
        frac = (frame % k) / k
        quats = quat_slerp(keys[lo], keys[lo + 1], np.broadcast_to(frac[:, None], (T, J)))

    trans = None
    if p["root_speed"]:
        trans = np.zeros((T, 3))
        trans[:, 2] = p["root_speed"] * t
    return MotionSequence(quats=quats, fps=fps, name=f"synth-{kind}-s{seed}", root_translation=trans)
