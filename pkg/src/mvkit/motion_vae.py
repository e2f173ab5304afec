"""Sequence VAE for motion windows, in numpy with explicit backpropagation.

Encoder: bidirectional GRU over the W x D input, outputs averaged over time,
then a two-hidden-layer tanh MLP with linear heads for the mean and log
standard deviation of the latent Gaussian.

Decoder: forward GRU whose input at every step is the previous pose estimate
concatenated with z (step 0 sees a learned initial pose token), followed by a
two-hidden-layer tanh MLP that emits the pose. No teacher forcing; gradients
flow through the fed-back predictions.

GRU cell (row-vector convention, gates ordered reset / update / candidate)::

    r = sigmoid(x Wx_r + bx_r + h Wh_r + bh_r)
    u = sigmoid(x Wx_u + bx_u + h Wh_u + bh_u)
    n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
    h' = (1 - u) * n + u * h

Minimised objective: mean squared reconstruction error plus
``kl_weight * KL(q(z|x) || N(0, I)) / latent_dim``.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .metrics import sixd_features
from .rotations import matrix_to_quat, sixd_to_matrix
from .sequence import MotionSequence, require_temporal
from .smoothing import WindowSpec, sliding_windows, stitch_windows

log = logging.getLogger(__name__)

LOG_SIGMA_CLAMP = 10.0
IDENTITY_SIXD = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


class VaeError(ValueError):
    pass


class TrainingDivergedError(ArithmeticError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step
        self.loss = loss


@dataclass
class VaeConfig:
    window: int = 90
    input_dim: int = 144
    latent_dim: int = 32
    encoder_hidden: int = 64
    decoder_hidden: int = 64
    mlp_hidden: Tuple[int, int] = (64, 64)
    kl_weight: float = 1e-3
    learning_rate: float = 1e-3
    lr_final_ratio: float = 1.0
    grad_clip: float = 1.0
    epochs: int = 100
    batch_size: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        self.mlp_hidden = tuple(int(m) for m in self.mlp_hidden)
        if len(self.mlp_hidden) != 2:
            raise VaeError(f"mlp_hidden must have two entries, got {self.mlp_hidden}")
        dims = dict(
            input_dim=self.input_dim,
            latent_dim=self.latent_dim,
            encoder_hidden=self.encoder_hidden,
            decoder_hidden=self.decoder_hidden,
            epochs=self.epochs,
            batch_size=self.batch_size,
        )
        for k, v in dims.items():
            if int(v) != v or v < 1:
                raise VaeError(f"{k} must be a positive integer, got {v}")
        if min(self.mlp_hidden) < 1:
            raise VaeError("mlp_hidden entries must be >= 1")
        if self.window < 2:
            raise VaeError(f"window must be >= 2, got {self.window}")
        if self.kl_weight < 0:
            raise VaeError("kl_weight must be >= 0")
        if self.learning_rate < 0 or not 0 < self.lr_final_ratio <= 1:
            raise VaeError("learning_rate must be >= 0 and lr_final_ratio in (0, 1]")

    @classmethod
    def full_scale(cls, **kw) -> "VaeConfig":
        """Layer sizes of the full-size model (90-frame windows, 512-d latent)."""
        base = dict(window=90, latent_dim=512, encoder_hidden=512, decoder_hidden=512, mlp_hidden=(1024, 512))
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d


@dataclass
class LatentCode:
    mu: np.ndarray
    log_sigma: np.ndarray
    z: Optional[np.ndarray] = None


def param_shapes(cfg: VaeConfig) -> Dict[str, tuple]:
    D, Z = cfg.input_dim, cfg.latent_dim
    He, Hd = cfg.encoder_hidden, cfg.decoder_hidden
    M1, M2 = cfg.mlp_hidden
    shapes = {}
    for d in ("ef", "eb"):
        shapes.update({f"{d}_Wx": (D, 3 * He), f"{d}_Wh": (He, 3 * He), f"{d}_bx": (3 * He,), f"{d}_bh": (3 * He,)})
    shapes.update(
        {
            "e_W1": (2 * He, M1), "e_b1": (M1,),
            "e_W2": (M1, M2), "e_b2": (M2,),
            "e_Wmu": (M2, Z), "e_bmu": (Z,),
            "e_Wls": (M2, Z), "e_bls": (Z,),
            "d_Wx": (D + Z, 3 * Hd), "d_Wh": (Hd, 3 * Hd), "d_bx": (3 * Hd,), "d_bh": (3 * Hd,),
            "d_W1": (Hd, M1), "d_b1": (M1,),
            "d_W2": (M1, M2), "d_b2": (M2,),
            "d_Wo": (M2, D), "d_bo": (D,),
            "d_init": (D,),
        }
    )
    return shapes


class VaeModel:
    """Parameters, config and step counter of a motion VAE."""

    def __init__(self, config: VaeConfig, params: Dict[str, np.ndarray], step: int = 0):
        self.config = config
        shapes = param_shapes(config)
        if set(params) != set(shapes):
            raise VaeError(f"parameter names differ from config: {sorted(set(params) ^ set(shapes))}")
        for k, s in shapes.items():
            if params[k].shape != s:
                raise VaeError(f"{k}: expected shape {s}, got {params[k].shape}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in shapes}
        self.step = step

    @classmethod
    def init(cls, config: VaeConfig, seed: Optional[int] = None) -> "VaeModel":
        rng = np.random.default_rng(config.rng_seed if seed is None else seed)
        p = {}
        for name, shape in param_shapes(config).items():
            if name.endswith(("_Wx", "_Wh")) or name.endswith(("_bx", "_bh")):
                hidden = shape[-1] // 3
                bound = 1.0 / math.sqrt(hidden)
                p[name] = rng.uniform(-bound, bound, shape)
            elif len(shape) == 2:
                bound = math.sqrt(6.0 / (shape[0] + shape[1]))
                p[name] = rng.uniform(-bound, bound, shape)
            else:
                p[name] = np.zeros(shape)
        for head in ("e_Wmu", "e_Wls", "d_Wo"):
            p[head] *= 0.1
        if config.input_dim % 6 == 0:
            ident = np.tile(IDENTITY_SIXD, config.input_dim // 6)
            p["d_bo"] = ident.copy()
            p["d_init"] = ident.copy()
        return cls(config, p)

    @classmethod
    def zeros(cls, config: VaeConfig) -> "VaeModel":
        return cls(config, {k: np.zeros(s) for k, s in param_shapes(config).items()})

    def copy(self) -> "VaeModel":
        return VaeModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.step)

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


# GRU


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _gru_step(gx, h, Wh, bh):
    H = h.shape[1]
    gh = h @ Wh + bh
    r = _sigmoid(gx[:, :H] + gh[:, :H])
    u = _sigmoid(gx[:, H : 2 * H] + gh[:, H : 2 * H])
    ghn = gh[:, 2 * H :]
    n = np.tanh(gx[:, 2 * H :] + r * ghn)
    h_new = (1.0 - u) * n + u * h
    return h_new, (h, r, u, n, ghn)


def _gru_step_back(dh_new, cache, Wh):
    """Returns (d gate pre-activations from x, d gate pre-activations from h, dh)."""
    h, r, u, n, ghn = cache
    dn = dh_new * (1.0 - u)
    du = dh_new * (h - n)
    dh = dh_new * u
    dan = dn * (1.0 - n * n)
    dr = dan * ghn
    dar = dr * r * (1.0 - r)
    dau = du * u * (1.0 - u)
    dgx = np.concatenate([dar, dau, dan], axis=1)
    dgh = np.concatenate([dar, dau, dan * r], axis=1)
    dh = dh + dgh @ Wh.T
    return dgx, dgh, dh


def _run_gru(gx_seq, Wh, bh, reverse=False):
    """gx_seq: (W, B, 3H) precomputed input projections."""
    W, B = gx_seq.shape[:2]
    H = Wh.shape[0]
    h = np.zeros((B, H))
    outs = np.empty((W, B, H))
    caches = [None] * W
    order = range(W - 1, -1, -1) if reverse else range(W)
    for t in order:
        h, caches[t] = _gru_step(gx_seq[t], h, Wh, bh)
        outs[t] = h
    return outs, caches


def _back_gru(d_outs, caches, Wh, reverse=False):
    """BPTT; returns dgx (W, B, 3H), dWh, dbh."""
    W = d_outs.shape[0]
    dgx_seq = np.empty(d_outs.shape[:2] + (Wh.shape[1],))
    dWh = np.zeros_like(Wh)
    dbh = np.zeros(Wh.shape[1])
    carry = np.zeros_like(d_outs[0])
    order = range(W) if reverse else range(W - 1, -1, -1)
    for t in order:
        dgx, dgh, carry = _gru_step_back(d_outs[t] + carry, caches[t], Wh)
        dgx_seq[t] = dgx
        dWh += caches[t][0].T @ dgh
        dbh += dgh.sum(axis=0)
    return dgx_seq, dWh, dbh


# encoder / decoder


def _as_batch(x, cfg: VaeConfig) -> Tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != cfg.input_dim:
        raise VaeError(f"expected (W, {cfg.input_dim}) or (B, W, {cfg.input_dim}) input, got {np.shape(x)}")
    if X.shape[1] != cfg.window:
        raise VaeError(f"expected window of {cfg.window} frames, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise VaeError("non-finite input")
    return X, single


def _encode_forward(p, X):
    Xt = np.swapaxes(X, 0, 1)  # (W, B, D)
    hf, cf = _run_gru(Xt @ p["ef_Wx"] + p["ef_bx"], p["ef_Wh"], p["ef_bh"])
    hb, cb = _run_gru(Xt @ p["eb_Wx"] + p["eb_bx"], p["eb_Wh"], p["eb_bh"], reverse=True)
    pooled = np.concatenate([hf, hb], axis=2).mean(axis=0)
    a1 = np.tanh(pooled @ p["e_W1"] + p["e_b1"])
    a2 = np.tanh(a1 @ p["e_W2"] + p["e_b2"])
    mu = a2 @ p["e_Wmu"] + p["e_bmu"]
    ls_raw = a2 @ p["e_Wls"] + p["e_bls"]
    ls = np.clip(ls_raw, -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
    cache = dict(Xt=Xt, cf=cf, cb=cb, pooled=pooled, a1=a1, a2=a2, ls_raw=ls_raw)
    return mu, ls, cache


def _encode_backward(p, cache, dmu, dls, g):
    a1, a2 = cache["a1"], cache["a2"]
    dls = dls * (np.abs(cache["ls_raw"]) < LOG_SIGMA_CLAMP)
    g["e_Wmu"] += a2.T @ dmu
    g["e_bmu"] += dmu.sum(0)
    g["e_Wls"] += a2.T @ dls
    g["e_bls"] += dls.sum(0)
    da2 = dmu @ p["e_Wmu"].T + dls @ p["e_Wls"].T
    dpre2 = da2 * (1.0 - a2 * a2)
    g["e_W2"] += a1.T @ dpre2
    g["e_b2"] += dpre2.sum(0)
    dpre1 = (dpre2 @ p["e_W2"].T) * (1.0 - a1 * a1)
    g["e_W1"] += cache["pooled"].T @ dpre1
    g["e_b1"] += dpre1.sum(0)
    dpooled = dpre1 @ p["e_W1"].T
    Xt = cache["Xt"]
    W = Xt.shape[0]
    He = p["ef_Wh"].shape[0]
    d_outs = np.broadcast_to(dpooled / W, (W,) + dpooled.shape)
    for d, key, rev in (("ef", "cf", False), ("eb", "cb", True)):
        part = d_outs[:, :, :He] if d == "ef" else d_outs[:, :, He:]
        dgx, dWh, dbh = _back_gru(part, cache[key], p[f"{d}_Wh"], reverse=rev)
        g[f"{d}_Wh"] += dWh
        g[f"{d}_bh"] += dbh
        g[f"{d}_Wx"] += Xt.reshape(-1, Xt.shape[2]).T @ dgx.reshape(-1, dgx.shape[2])
        g[f"{d}_bx"] += dgx.sum(axis=(0, 1))


def _decode_forward(p, z, W):
    B = z.shape[0]
    D = p["d_init"].shape[0]
    Hd = p["d_Wh"].shape[0]
    Wx_prev, Wx_z = p["d_Wx"][:D], p["d_Wx"][D:]
    zproj = z @ Wx_z + p["d_bx"]
    prev = np.broadcast_to(p["d_init"], (B, D))
    h = np.zeros((B, Hd))
    Y = np.empty((W, B, D))
    steps = []
    for t in range(W):
        gx = prev @ Wx_prev + zproj
        h, gc = _gru_step(gx, h, p["d_Wh"], p["d_bh"])
        a1 = np.tanh(h @ p["d_W1"] + p["d_b1"])
        a2 = np.tanh(a1 @ p["d_W2"] + p["d_b2"])
        y = a2 @ p["d_Wo"] + p["d_bo"]
        steps.append((prev, gc, h, a1, a2))
        Y[t] = y
        prev = y
    return np.swapaxes(Y, 0, 1), dict(z=z, steps=steps)


def _decode_backward(p, cache, dY, g):
    """dY: (B, W, D). Accumulates parameter grads into g, returns dz."""
    z, steps = cache["z"], cache["steps"]
    D = p["d_init"].shape[0]
    Wx_prev, Wx_z = p["d_Wx"][:D], p["d_Wx"][D:]
    dYt = np.swapaxes(dY, 0, 1)
    dprev = np.zeros_like(dYt[0])
    dh_carry = np.zeros_like(steps[0][2])
    dgx_sum = np.zeros((z.shape[0], p["d_Wx"].shape[1]))
    for t in range(len(steps) - 1, -1, -1):
        prev, gc, h, a1, a2 = steps[t]
        dy = dYt[t] + dprev
        g["d_Wo"] += a2.T @ dy
        g["d_bo"] += dy.sum(0)
        dpre2 = (dy @ p["d_Wo"].T) * (1.0 - a2 * a2)
        g["d_W2"] += a1.T @ dpre2
        g["d_b2"] += dpre2.sum(0)
        dpre1 = (dpre2 @ p["d_W2"].T) * (1.0 - a1 * a1)
        g["d_W1"] += h.T @ dpre1
        g["d_b1"] += dpre1.sum(0)
        dh = dpre1 @ p["d_W1"].T + dh_carry
        dgx, dgh, dh_carry = _gru_step_back(dh, gc, p["d_Wh"])
        g["d_Wh"] += gc[0].T @ dgh
        g["d_bh"] += dgh.sum(0)
        g["d_Wx"][:D] += prev.T @ dgx
        dgx_sum += dgx
        dprev = dgx @ Wx_prev.T
    g["d_init"] += dprev.sum(0)
    g["d_Wx"][D:] += z.T @ dgx_sum
    g["d_bx"] += dgx_sum.sum(0)
    return dgx_sum @ Wx_z.T


# public operations


def encode(model: VaeModel, seq) -> LatentCode:
    """(mu, log_sigma) for a (W, D) window or a (B, W, D) batch."""
    X, single = _as_batch(seq, model.config)
    mu, ls, _ = _encode_forward(model.params, X)
    if single:
        mu, ls = mu[0], ls[0]
    return LatentCode(mu=mu, log_sigma=ls)


def reparameterize(code: LatentCode, rng_seed: int) -> np.ndarray:
    """``z = mu + exp(log_sigma) * eps`` with ``eps`` from a seeded standard normal."""
    mu = np.asarray(code.mu, dtype=np.float64)
    ls = np.clip(np.asarray(code.log_sigma, dtype=np.float64), -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
    eps = np.random.default_rng(rng_seed).standard_normal(mu.shape)
    z = mu + np.exp(ls) * eps
    code.z = z
    return z


def decode(model: VaeModel, z, W: Optional[int] = None) -> np.ndarray:
    """Autoregressive rollout of ``W`` frames; (W, D) for one z, (B, W, D) for a batch."""
    W = model.config.window if W is None else int(W)
    zz = np.asarray(z, dtype=np.float64)
    single = zz.ndim == 1
    if single:
        zz = zz[None]
    if zz.shape[1] != model.config.latent_dim:
        raise VaeError(f"z has dimension {zz.shape[1]}, model expects {model.config.latent_dim}")
    Y, _ = _decode_forward(model.params, zz, W)
    return Y[0] if single else Y


def kl_term(mu, log_sigma) -> float:
    """Batch-mean of KL(N(mu, sigma^2) || N(0, I)) divided by the latent size."""
    mu = np.atleast_2d(mu)
    ls = np.atleast_2d(log_sigma)
    per = -0.5 * (1.0 + 2.0 * ls - mu * mu - np.exp(2.0 * ls))
    return float(per.sum(axis=1).mean() / mu.shape[1])


def vae_loss(recon, target, code: LatentCode, kl_weight: float) -> Tuple[float, float, float]:
    """Returns ``(total, recon_term, kl_term)``; the total is minimised."""
    r = np.asarray(recon, dtype=np.float64)
    x = np.asarray(target, dtype=np.float64)
    if r.shape != x.shape:
        raise VaeError(f"shape mismatch: recon {r.shape} vs target {x.shape}")
    rec = float(np.mean((r - x) ** 2))
    kl = kl_term(code.mu, code.log_sigma)
    return rec + kl_weight * kl, rec, kl


def loss_and_grad(model: VaeModel, X, eps, kl_weight: float, need_grad: bool = True):
    """Forward and backward pass on a batch with fixed reparameterisation noise.

    Args:
        X: (B, W, D) targets (also the encoder input).
        eps: (B, latent_dim) standard-normal noise; zeros reconstruct through mu.

    Returns:
        ((total, recon, kl), grads or None, recon_output)
    """
    p = model.params
    X, _ = _as_batch(X, model.config)
    B, W, D = X.shape
    mu, ls, ecache = _encode_forward(p, X)
    sigma = np.exp(ls)
    z = mu + sigma * eps
    Y, dcache = _decode_forward(p, z, W)
    total, rec, kl = vae_loss(Y, X, LatentCode(mu, ls), kl_weight)
    if not need_grad:
        return (total, rec, kl), None, Y
    g = {k: np.zeros_like(v) for k, v in p.items()}
    dY = 2.0 * (Y - X) / X.size
    dz = _decode_backward(p, dcache, dY, g)
    scale = kl_weight / (B * mu.shape[1])
    dmu = dz + scale * mu
    dls = dz * sigma * eps + scale * (sigma * sigma - 1.0)
    _encode_backward(p, ecache, dmu, dls, g)
    return (total, rec, kl), g, Y


# training


@dataclass
class TrainResult:
    model: VaeModel
    loss_history: List[float] = field(default_factory=list)
    recon_history: List[float] = field(default_factory=list)
    kl_history: List[float] = field(default_factory=list)
    steps: int = 0


class Adam:
    """Adam with bias correction and global gradient-norm clipping."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float, clip: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.clip, self.b1, self.b2, self.eps = lr, clip, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params, grads, lr=None) -> float:
        lr = self.lr if lr is None else lr
        norm = math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))
        factor = self.clip / norm if self.clip > 0 and norm > self.clip else 1.0
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            g = g * factor
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            if lr:
                params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return norm


def stack_windows(dataset: Sequence[np.ndarray], cfg: VaeConfig) -> np.ndarray:
    if len(dataset) == 0:
        raise VaeError("empty dataset")
    X = np.stack([np.asarray(d, dtype=np.float64) for d in dataset])
    if X.shape[1:] != (cfg.window, cfg.input_dim):
        raise VaeError(f"windows must be ({cfg.window}, {cfg.input_dim}), got {X.shape[1:]}")
    if not np.all(np.isfinite(X)):
        raise VaeError("non-finite values in dataset")
    return X


def evaluate_loss(model: VaeModel, X: np.ndarray, kl_weight: Optional[float] = None, batch: int = 256):
    """Deterministic loss (z = mu) over a whole dataset; returns (total, recon, kl)."""
    kw = model.config.kl_weight if kl_weight is None else kl_weight
    rec_parts, kl_parts, n = [], [], X.shape[0]
    for s in range(0, n, batch):
        xb = X[s : s + batch]
        (_, rec, kl), _, _ = loss_and_grad(model, xb, np.zeros((xb.shape[0], model.config.latent_dim)), kw, False)
        rec_parts.append(rec * xb.shape[0])
        kl_parts.append(kl * xb.shape[0])
    rec = math.fsum(rec_parts) / n
    kl = math.fsum(kl_parts) / n
    return rec + kw * kl, rec, kl


def train(
    model: VaeModel,
    dataset: Sequence[np.ndarray],
    config: Optional[VaeConfig] = None,
    callback: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Minibatch Adam on the VAE loss; the input model is not modified.

    The loss history holds one deterministic full-dataset evaluation (z = mu)
    before training and after every epoch.

    Raises:
        VaeError: empty or mis-shaped dataset.
        TrainingDivergedError: non-finite loss, with the step index.
    """
    cfg = config or model.config
    X = stack_windows(dataset, model.config)
    model = model.copy()
    rng = np.random.default_rng(cfg.rng_seed)
    opt = Adam(model.params, cfg.learning_rate, cfg.grad_clip)
    n = X.shape[0]
    bs = min(cfg.batch_size, n)
    per_epoch = -(-n // bs)
    total_steps = cfg.epochs * per_epoch
    result = TrainResult(model=model)

    def record():
        tot, rec, kl = evaluate_loss(model, X, cfg.kl_weight)
        result.loss_history.append(tot)
        result.recon_history.append(rec)
        result.kl_history.append(kl)

    record()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for s in range(0, n, bs):
            idx = order[s : s + bs]
            eps = rng.standard_normal((idx.size, model.config.latent_dim))
            (total, _, _), grads, _ = loss_and_grad(model, X[idx], eps, cfg.kl_weight)
            if not math.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDivergedError(model.step, total)
            frac = result.steps / max(1, total_steps - 1)
            lr = cfg.learning_rate * cfg.lr_final_ratio**frac
            opt.update(model.params, grads, lr)
            model.step += 1
            result.steps += 1
        record()
        if not math.isfinite(result.loss_history[-1]):
            raise TrainingDivergedError(model.step, result.loss_history[-1])
        if callback is not None:
            callback(epoch, result.loss_history[-1])
        log.debug("epoch %d loss %.6g", epoch, result.loss_history[-1])
    return result


# gradient check


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    worst_param: str
    per_param: Dict[str, float]
    tolerance: float
    entries_checked: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def gradient_check(
    model: VaeModel,
    batch,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    kl_weight: float = 0.5,
    seed: int = 0,
    max_entries: Optional[int] = None,
    floor: float = 1e-6,
    transform_grads: Optional[Callable[[Dict[str, np.ndarray]], Dict[str, np.ndarray]]] = None,
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``. The
    reparameterisation noise is drawn once from ``seed`` and held fixed.
    ``max_entries`` samples that many entries per tensor (all by default).
    ``transform_grads`` lets tests tamper with the analytic gradients.
    """
    X, _ = _as_batch(batch, model.config)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((X.shape[0], model.config.latent_dim))
    work = model.copy()
    _, grads, _ = loss_and_grad(work, X, eps, kl_weight)
    if transform_grads is not None:
        grads = transform_grads({k: v.copy() for k, v in grads.items()})

    def f():
        return loss_and_grad(work, X, eps, kl_weight, need_grad=False)[0][0]

    per_param, worst, worst_name, worst_abs, checked = {}, 0.0, "", 0.0, 0
    for name, arr in work.params.items():
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        a = grads[name].reshape(-1)
        pmax = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = f()
            flat[i] = orig - step
            fm = f()
            flat[i] = orig
            num = (fp - fm) / (2.0 * step)
            err = float(abs(a[i] - num))
            rel = err / max(abs(float(a[i])), abs(num), floor)
            worst_abs = max(worst_abs, err)
            pmax = max(pmax, rel)
            checked += 1
        per_param[name] = pmax
        if pmax >= worst:
            worst, worst_name = pmax, name
    return GradCheckReport(worst, worst_abs, worst_name, per_param, tolerance, checked)


# sequences


def sequence_features(seq: MotionSequence) -> np.ndarray:
    """(T, J*6) encoder features."""
    return sixd_features(seq)


def features_to_quats(Y: np.ndarray, joint_count: int) -> np.ndarray:
    """(..., J*6) decoder rows to (..., J, 4) quaternions via Gram-Schmidt."""
    Y = np.asarray(Y)
    six = Y.reshape(Y.shape[:-1] + (joint_count, 6))
    return matrix_to_quat(sixd_to_matrix(six))


def training_windows(seqs: Sequence[MotionSequence], window: int, stride: Optional[int] = None) -> List[np.ndarray]:
    """Feature windows of exactly ``window`` frames cut from each sequence."""
    spec = WindowSpec(window, stride or window)
    out = []
    for seq in seqs:
        wins, _ = sliding_windows(seq, spec)
        out.extend(sequence_features(w) for w in wins)
    return out


def reconstruct_sequence(model: VaeModel, seq: MotionSequence) -> MotionSequence:
    """Window, encode through mu (no sampling), decode, re-stitch.

    Root translation and betas are carried over from the input.
    """
    require_temporal(seq, "reconstruct_sequence")
    cfg = model.config
    if seq.joint_count * 6 != cfg.input_dim:
        raise VaeError(f"sequence has {seq.joint_count} joints; model expects {cfg.input_dim // 6}")
    windows, index = sliding_windows(seq, WindowSpec(cfg.window))
    X = np.stack([sequence_features(w) for w in windows])
    code = encode(model, X)
    Y = decode(model, code.mu, cfg.window)
    quats = features_to_quats(Y, seq.joint_count)
    rebuilt = [w.copy(quats=q) for w, q in zip(windows, quats)]
    out = stitch_windows(rebuilt, index, "take_first")
    out.name = f"{seq.name}|vae"
    out.meta = dict(seq.meta)
    return out


# serialization

MODEL_MAGIC = b"MVAE"
MODEL_VERSION = 1


def save_model(model: VaeModel, path) -> None:
    """Binary model file: magic, u16 version, JSON manifest, shape-prefixed float64 tensors (little-endian)."""
    names = list(model.params)
    manifest = json.dumps({"config": model.config.to_dict(), "step": model.step, "tensors": names}, sort_keys=True)
    mbytes = manifest.encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<HI", MODEL_VERSION, len(mbytes)), mbytes]
    for name in names:
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> VaeModel:
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise VaeError(f"{path}: not a model file (bad magic)")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise VaeError(f"{path}: truncated at byte {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    version, mlen = struct.unpack("<HI", take(6))
    if version != MODEL_VERSION:
        raise VaeError(f"{path}: unsupported model version {version}")
    manifest = json.loads(take(mlen).decode("utf-8"))
    cfg = VaeConfig(**manifest["config"])
    params = {}
    for expected in manifest["tensors"]:
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        if name != expected:
            raise VaeError(f"{path}: tensor {name!r} where manifest lists {expected!r}")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(data):
        raise VaeError(f"{path}: {len(data) - pos} trailing bytes")
    return VaeModel(cfg, params, manifest["step"])
