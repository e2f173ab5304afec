"""Independent reference implementations used as test oracles."""
import math

import numpy as np


def rotvec_matrices(v):
    """Rodrigues formula for a batch of rotation vectors, (N, 3) -> (N, 3, 3)."""
    v = np.asarray(v, dtype=float)
    th = np.linalg.norm(v, axis=-1)
    safe = np.where(th == 0, 1.0, th)
    k = v / safe[:, None]
    K = np.zeros((len(v), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -k[:, 2], k[:, 1]
    K[:, 1, 0], K[:, 1, 2] = k[:, 2], -k[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -k[:, 1], k[:, 0]
    s = np.sin(th)[:, None, None]
    c = (1 - np.cos(th))[:, None, None]
    return np.eye(3) + s * K + c * (K @ K)


def _grid_costs(Xc, Yc, Rs):
    """Least-squares cost per candidate rotation with the best scale (>= 0)."""
    RX = np.einsum("nij,pj->npi", Rs, Xc)
    cross = np.einsum("npi,pi->n", RX, Yc)
    s = np.maximum(cross / np.sum(Xc * Xc), 0.0)
    cost = np.sum(Yc * Yc) - 2 * s * cross + s * s * np.sum(Xc * Xc)
    return cost, s


def brute_force_similarity(X, Y, coarse=24, rounds=6, fine=9):
    """Similarity alignment by exhaustive rotation search.

    Evaluates a uniform grid over the rotation-vector ball, then repeatedly
    re-grids a shrinking cube around the best candidate. Scale and
    translation use their closed forms for each candidate rotation.

    Returns (sum of squared residuals, R, s, t).
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    mx, my = X.mean(0), Y.mean(0)
    Xc, Yc = X - mx, Y - my
    ax = np.linspace(-math.pi, math.pi, coarse)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    g = g[np.linalg.norm(g, axis=1) <= math.pi]
    cost, _ = _grid_costs(Xc, Yc, rotvec_matrices(g))
    best = g[np.argmin(cost)]
    half = 2 * math.pi / coarse
    for _ in range(rounds):
        off = np.linspace(-half, half, fine)
        local = np.stack(np.meshgrid(off, off, off, indexing="ij"), -1).reshape(-1, 3)
        # perturb by composition so the search is uniform around the current rotation
        R0 = rotvec_matrices(best[None])[0]
        Rs = np.einsum("nij,jk->nik", rotvec_matrices(local), R0)
        cost, scales = _grid_costs(Xc, Yc, Rs)
        i = np.argmin(cost)
        R_best, s_best = Rs[i], scales[i]
        best = _matrix_rotvec(R_best)
        half /= (fine - 1) / 2
    cost, s = _grid_costs(Xc, Yc, R_best[None])
    t = my - s[0] * R_best @ mx
    return float(cost[0]), R_best, float(s[0]), t


def _matrix_rotvec(R):
    c = max(-1.0, min(1.0, (np.trace(R) - 1) / 2))
    th = math.acos(c)
    if th < 1e-12:
        return np.zeros(3)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if math.pi - th < 1e-6:
        # near a half turn: axis from the symmetric part
        B = (R + np.eye(3)) / 2
        axis = B[np.argmax(np.diag(B))]
        return axis / np.linalg.norm(axis) * th
    return w / (2 * math.sin(th)) * th


def gaussian_kl(mu, sigma):
    """KL(N(mu, sigma^2) || N(0, 1)) per dimension, from the textbook formula."""
    return np.log(1.0 / sigma) + (sigma**2 + mu**2) / 2.0 - 0.5
