"""Perplexity-calibrated Gaussian affinities.

A row of squared distances ``d2`` is turned into neighbour probabilities
``p_j ~ exp(-beta * d2_j)``; ``beta`` is chosen so the row has a given
perplexity (2 ** entropy in bits). Rows are then symmetrized into a joint
distribution over ordered pairs.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    DegenerateRowError,
    NoConvergenceError,
    NormalizationError,
    ShapeError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PerplexityTarget:
    ppx: float
    tol: float = 1e-5  # on ln(perplexity)
    max_iters: int = 100

    def __post_init__(self):
        if not self.ppx > 1:
            raise ConfigError(f"perplexity must be > 1, got {self.ppx}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")

    def check_candidates(self, k: int):
        if self.ppx > k:
            raise ConfigError(f"perplexity {self.ppx} exceeds the {k} available neighbours")


@dataclass(frozen=True)
class AffinityRow:
    beta: float
    probs: np.ndarray
    achieved_ppx: float


@dataclass(frozen=True)
class JointAffinity:
    """Symmetric joint neighbour probabilities ``p`` (zero diagonal, sums to 1)."""

    p: np.ndarray

    @property
    def n_local(self) -> int:
        return self.p.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)


def entropy_bits(probs) -> float:
    p = np.asarray(probs, dtype=np.float64)
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise NormalizationError("probabilities must be non-negative and sum to 1")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def conditional_row(d2_row, beta) -> np.ndarray:
    """Gaussian neighbour probabilities, stabilized by shifting to the nearest neighbour."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    d2 = np.asarray(d2_row, dtype=np.float64)
    e = np.exp(-beta * (d2 - d2.min()))
    total = e.sum()
    assert total >= 1.0  # the nearest neighbour contributes exp(0)
    return e / total


def row_entropy_nats(d2_row, beta) -> float:
    """Row entropy via ln C + (beta / C) * sum d2 exp(-beta d2).

    Shift-invariant, so it is evaluated on distances relative to the minimum.
    """
    d2 = np.asarray(d2_row, dtype=np.float64)
    d = d2 - d2.min()
    e = np.exp(-beta * d)
    C = e.sum()
    return float(np.log(C) + beta * (d * e).sum() / C)


def beta_search(d2_row, target: PerplexityTarget) -> AffinityRow:
    d2 = np.asarray(d2_row, dtype=np.float64).ravel()
    if d2.size < 2:
        raise ValueError("need at least two candidate neighbours")
    if not np.isfinite(d2).all() or (d2 < 0).any():
        raise ValueError("squared distances must be finite and non-negative")
    target.check_candidates(d2.size)
    betas, ln_ppx, status = kernels.beta_search(
        d2[None, :], math.log(target.ppx), target.tol, target.max_iters, False
    )
    _raise_status(int(status[0]), d2.size, target, float(ln_ppx[0]))
    beta = float(betas[0])
    return AffinityRow(beta, conditional_row(d2, beta), math.exp(ln_ppx[0]))


def _raise_status(status, k, target, ln_ppx):
    if status == kernels.DEGENERATE:
        raise DegenerateRowError(f"all {k} distances are equal; perplexity is {k} for every beta, target {target.ppx}")
    if status == kernels.NOT_CONVERGED:
        raise NoConvergenceError(f"beta search stopped at perplexity {math.exp(ln_ppx):.6g}, target {target.ppx}")


def calibrate(D2, target: PerplexityTarget, on_degenerate="raise"):
    """Per-row betas for a square squared-distance matrix (self excluded).

    ``on_degenerate`` is ``"raise"`` or ``"uniform"``; in the latter case
    degenerate rows get beta = 0 (uniform probabilities) and a warning.
    Returns ``(betas, status)``.
    """
    D2 = np.asarray(D2, dtype=np.float64)
    n = D2.shape[0]
    if D2.ndim != 2 or D2.shape[1] != n:
        raise ShapeError(f"expected a square matrix, got {D2.shape}")
    target.check_candidates(n - 1)
    betas, ln_ppx, status = kernels.beta_search(D2, math.log(target.ppx), target.tol, target.max_iters, True)
    bad = np.flatnonzero(status == kernels.NOT_CONVERGED)
    if bad.size:
        _raise_status(kernels.NOT_CONVERGED, n - 1, target, float(ln_ppx[bad[0]]))
    degenerate = np.flatnonzero(status == kernels.DEGENERATE)
    if degenerate.size:
        if on_degenerate == "raise":
            _raise_status(kernels.DEGENERATE, n - 1, target, float(ln_ppx[degenerate[0]]))
        log.warning("%d degenerate rows (all neighbours equidistant); using uniform rows", degenerate.size)
        betas[degenerate] = 0.0
    return betas, status


def conditional_matrix(D2, betas) -> np.ndarray:
    """Row-stochastic matrix of p_{j|i} with zero diagonal."""
    D2 = np.asarray(D2, dtype=np.float64)
    n = D2.shape[0]
    off = ~np.eye(n, dtype=bool)
    D = np.where(off, D2, np.inf)
    D = D - D.min(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        E = np.exp(-np.asarray(betas)[:, None] * D)
    E[~off] = 0.0
    return E / E.sum(axis=1, keepdims=True)


def symmetrize(cond) -> JointAffinity:
    """p_ij = (p_{j|i} + p_{i|j}) / (2n).

    ``cond`` is either a row-stochastic n x n matrix with zero diagonal or a
    sequence of n ``AffinityRow``s whose probabilities skip the self entry.
    """
    if len(cond) and isinstance(cond[0], AffinityRow):
        n = len(cond)
        mat = np.zeros((n, n))
        for i, row in enumerate(cond):
            if row.probs.shape != (n - 1,):
                raise ShapeError(f"row {i} has {row.probs.shape[0]} entries, expected {n - 1}")
            mat[i, np.arange(n) != i] = row.probs
        cond = mat
    cond = np.asarray(cond, dtype=np.float64)
    if cond.ndim != 2 or cond.shape[0] != cond.shape[1]:
        raise ShapeError(f"expected a square conditional matrix, got {cond.shape}")
    n = cond.shape[0]
    P = (cond + cond.T) / (2.0 * n)
    return JointAffinity(P)


def joint_affinity(D2, target: PerplexityTarget, on_degenerate="uniform") -> JointAffinity:
    betas, _ = calibrate(D2, target, on_degenerate=on_degenerate)
    return symmetrize(conditional_matrix(D2, betas))


def normalized_entropy_experiment(sizes, samples=100, seed=0, beta=1.0):
    """Mean normalized entropy of Gaussian neighbour rows for growing sample sizes.

    For each size, ``size - 1`` neighbours are drawn from a 2-D standard
    Gaussian around a reference point at the origin; the entropy of the
    reference's neighbour distribution is divided by its maximum,
    ``log2(size - 1)``. A single neighbour reports 1.0.

    Returns a list of ``(size, mean)`` tuples.
    """
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("sizes must be strictly ascending")
    if samples < 1 or (sizes and sizes[0] < 2):
        raise ConfigError("need samples >= 1 and sizes >= 2")
    out = []
    for size in sizes:
        rng = np.random.default_rng([seed, size])
        k = size - 1
        if k == 1:
            out.append((size, 1.0))
            continue
        vals = np.empty(samples)
        for s in range(samples):
            pts = rng.standard_normal((k, 2))
            p = conditional_row((pts * pts).sum(axis=1), beta)
            vals[s] = entropy_bits(p) / math.log2(k)
        out.append((size, float(vals.mean())))
    return out
