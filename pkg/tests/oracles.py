"""Independent reference implementations used to check the package.

Everything here is written from the defining formulas with plain loops or
brute-force scans; none of it calls into ``ptsne``.
"""
import math

import numpy as np


def cond_probs(d2, beta):
    """p_j = exp(-beta d2_j) / sum_k exp(-beta d2_k), shifted by min d2 for range."""
    d2 = np.asarray(d2, dtype=np.float64)
    w = np.exp(-beta * (d2 - d2.min()))
    return w / w.sum()


def entropy_bits(p):
    p = np.asarray(p, dtype=np.float64)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _grid_entropy_bits(d2, betas):
    """Entropy in bits of exp(-beta d2) / sum for each beta, evaluated directly."""
    d = np.asarray(d2, dtype=np.float64)
    d = d - d.min()
    E = np.exp(-np.outer(betas, d))
    P = E / E.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        T = np.where(P > 0, P * np.log2(P), 0.0)
    return -T.sum(axis=1)


def beta_grid_oracle(d2, target_bits, points=10_000, levels=3):
    """Dense log-spaced scan of beta over [2^-30, 2^30], refined inside the
    bracketing cell ``levels - 1`` times. Returns the scanned beta whose
    entropy is closest to ``target_bits``."""
    lo, hi = -30.0, 30.0
    best = None
    for _ in range(levels):
        grid = np.logspace(lo, hi, points, base=2.0)
        err = _grid_entropy_bits(d2, grid) - target_bits
        k = int(np.argmin(np.abs(err)))
        best = grid[k]
        # entropy decreases in beta: the bracket is where err changes sign
        sign = np.nonzero(np.diff(np.sign(err)) != 0)[0]
        if sign.size:
            j = int(sign[0])
            lo, hi = math.log2(grid[j]), math.log2(grid[j + 1])
        else:
            lo = math.log2(grid[max(k - 1, 0)])
            hi = math.log2(grid[min(k + 1, points - 1)])
    return float(best)


def q_matrix(Y):
    z = len(Y)
    W = np.zeros((z, z))
    for i in range(z):
        for j in range(z):
            if i != j:
                dx = Y[i][0] - Y[j][0]
                dy = Y[i][1] - Y[j][1]
                W[i, j] = 1.0 / (1.0 + dx * dx + dy * dy)
    return W / W.sum()


def kl(P, Y):
    Q = q_matrix(Y)
    z = len(Y)
    c = 0.0
    for i in range(z):
        for j in range(z):
            if i != j and P[i, j] > 0:
                c += P[i, j] * math.log(P[i, j] / Q[i, j])
    return c


def pseudo_norm(P, Y):
    Q = q_matrix(Y)
    z = len(Y)
    ce = 0.0
    for i in range(z):
        for j in range(z):
            if i != j and P[i, j] > 0:
                ce -= P[i, j] * math.log(Q[i, j])
    return ce / (math.log(z) + math.log(z - 1))


def fd_gradient(P, Y, h=1e-5):
    G = np.zeros_like(Y)
    for i in range(Y.shape[0]):
        for d in range(2):
            Yp = Y.copy()
            Ym = Y.copy()
            Yp[i, d] += h
            Ym[i, d] -= h
            G[i, d] = (kl(P, Yp) - kl(P, Ym)) / (2 * h)
    return G


def joint_from_conditional(C):
    n = C.shape[0]
    return (C + C.T) / (2.0 * n)


def kde_direct(points, betas, xc, yc, cell_area):
    """Adaptive Gaussian KDE times cell area, evaluated cell by cell."""
    out = np.zeros((len(yc), len(xc)))
    n = len(points)
    for iy, y in enumerate(yc):
        for ix, x in enumerate(xc):
            s = 0.0
            for (px, py), b in zip(points, betas):
                s += b / math.pi * math.exp(-b * ((x - px) ** 2 + (y - py) ** 2))
            out[iy, ix] = s * cell_area / n
    return out


def smoothed_raster(rng, shape=(50, 50), passes=3):
    """Random field with a 3x3 box blur applied a few times, plus a tiny
    jitter so all values are distinct."""
    v = rng.random(shape)
    for _ in range(passes):
        p = np.pad(v, 1, mode="edge")
        v = sum(p[dy:dy + shape[0], dx:dx + shape[1]] for dy in range(3) for dx in range(3)) / 9.0
    v = v + rng.random(shape) * 1e-9
    assert np.unique(v).size == v.size
    return v
