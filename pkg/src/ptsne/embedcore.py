"""Single-chunk t-SNE: Cauchy affinities, costs, exact gradient and update step."""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateSpanError, DivergenceError, ShapeError

ETA_FLOOR = 1e-3


@dataclass(frozen=True)
class CostReport:
    kl: float
    pseudo_norm: float
    size: float


def _matrix(P):
    return np.asarray(getattr(P, "p", P), dtype=np.float64)


def _check(P, Y):
    P = _matrix(P)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] != 2:
        raise ShapeError(f"positions must be z x 2, got {Y.shape}")
    if P.shape != (Y.shape[0], Y.shape[0]):
        raise ShapeError(f"affinity shape {P.shape} does not match {Y.shape[0]} positions")
    return P, Y


def q_affinities(Y):
    """Return ``(Q, W)``: normalized and raw Cauchy weights ``1 / (1 + |yi - yj|^2)``."""
    Y = np.asarray(Y, dtype=np.float64)
    diff = Y[:, None, :] - Y[None, :, :]
    W = 1.0 / (1.0 + np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(W, 0.0)
    return W / W.sum(), W


def embedding_size(Y) -> float:
    """Diagonal length of the bounding box of the positions."""
    Y = np.asarray(Y)
    return float(np.hypot(*(Y.max(axis=0) - Y.min(axis=0))))


def _neg_entropy(P):
    nz = P[P > 0]
    return float((nz * np.log(nz)).sum())


def uniform_cost(z: int) -> float:
    """Cross-entropy of any P against a uniform Q over z(z-1) ordered pairs."""
    return math.log(z) + math.log(z - 1)


def kl_cost(P, Y) -> float:
    P, Y = _check(P, Y)
    ce = kernels.cross_entropy(P, Y)
    if not math.isfinite(ce):
        raise DivergenceError("cross-entropy is not finite")
    return ce + _neg_entropy(P)


def pseudo_norm_cost(P, Y) -> float:
    """Cross-entropy of P and Q relative to that of a uniform embedding."""
    P, Y = _check(P, Y)
    return kernels.cross_entropy(P, Y) / uniform_cost(Y.shape[0])


def cost_report(P, Y) -> CostReport:
    P, Y = _check(P, Y)
    ce = kernels.cross_entropy(P, Y)
    return CostReport(ce + _neg_entropy(P), ce / uniform_cost(Y.shape[0]), embedding_size(Y))


def gradient(P, Y) -> np.ndarray:
    P, Y = _check(P, Y)
    return kernels.tsne_gradient(P, Y)


def learning_rate(Y, n_points: int) -> float:
    """ln(n - 1) times half the coordinate span of the positions."""
    Y = np.asarray(Y)
    span = float(Y.max() - Y.min())
    eta = math.log(n_points - 1) * span / 2.0 if n_points > 1 else 0.0
    if not eta > 0:
        raise DegenerateSpanError(f"learning rate is {eta} (span {span}, n={n_points})")
    return eta


def step(P, Y, n_points=None, eta=None) -> np.ndarray:
    """One descent step on the KL divergence; no momentum, no exaggeration.

    ``n_points`` defaults to the number of positions. ``eta`` overrides the
    adaptive learning rate. A zero-span layout uses ``ETA_FLOOR``.
    """
    P, Y = _check(P, Y)
    if eta is None:
        try:
            eta = learning_rate(Y, Y.shape[0] if n_points is None else n_points)
        except DegenerateSpanError:
            eta = ETA_FLOOR
    out = Y - eta * kernels.tsne_gradient(P, Y)
    if not np.isfinite(out).all():
        raise DivergenceError("update produced non-finite positions")
    return out


def optimize(P, Y, iters: int, n_points=None) -> np.ndarray:
    for _ in range(iters):
        Y = step(P, Y, n_points)
    return Y
