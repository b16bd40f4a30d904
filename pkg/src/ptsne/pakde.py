"""Perplexity-adaptive kernel density estimation on a raster grid.

Each mapped point gets its own Gaussian precision, calibrated so that its
kernel over the other mapped points has a fixed perplexity: crowded regions
get narrow kernels, sparse ones wide kernels. The density at a cell centre c
is ``(S / n) * sum_j (beta_j / pi) * exp(-beta_j |c - y_j|^2)`` with S the
cell area, so the raster sums to ~1 when the grid covers the kernels.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, GridError, OutOfGridError
from .similarity import PerplexityTarget, calibrate

log = logging.getLogger(__name__)

DEFAULT_GRID = 200
DEFAULT_MARGIN = 4.0


@dataclass(frozen=True)
class DensityRaster:
    """``values[iy, ix]`` is the mass of the square cell with lower-left corner
    ``(x0 + ix * cell_size, y0 + iy * cell_size)``."""

    x0: float
    y0: float
    cell_size: float
    values: np.ndarray = field(repr=False)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def x_centers(self) -> np.ndarray:
        return self.x0 + (np.arange(self.width) + 0.5) * self.cell_size

    @property
    def y_centers(self) -> np.ndarray:
        return self.y0 + (np.arange(self.height) + 0.5) * self.cell_size

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())

    def cell_of(self, points, clamp_cells: float = 1.0) -> np.ndarray:
        """``(iy, ix)`` of the cell containing each point.

        Points up to ``clamp_cells`` cells outside the grid are clamped to the
        edge; anything further raises ``OutOfGridError``.
        """
        pts = np.asarray(points, dtype=np.float64)
        fx = (pts[:, 0] - self.x0) / self.cell_size
        fy = (pts[:, 1] - self.y0) / self.cell_size
        far = (fx < -clamp_cells) | (fx > self.width + clamp_cells) | (fy < -clamp_cells) | (fy > self.height + clamp_cells)
        if far.any():
            raise OutOfGridError(f"{int(far.sum())} points lie outside the grid")
        ix = np.clip(np.floor(fx).astype(np.int64), 0, self.width - 1)
        iy = np.clip(np.floor(fy).astype(np.int64), 0, self.height - 1)
        return iy, ix


@dataclass(frozen=True)
class KdeBandwidths:
    betas: np.ndarray
    ppx: float

    @property
    def h(self) -> np.ndarray:
        """Bandwidths, h^2 = 1 / beta."""
        return 1.0 / np.sqrt(self.betas)


def kde_bandwidths(points, ppx: float, target: PerplexityTarget = None) -> KdeBandwidths:
    """Per-point precisions from perplexity calibration over the other points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DataError(f"points must be n x 2, got {pts.shape}")
    n = pts.shape[0]
    if n < 3:
        raise DataError("need at least 3 points for adaptive bandwidths")
    if target is None:
        target = PerplexityTarget(ppx)
    if ppx > n - 1:
        raise ConfigError(f"perplexity {ppx} exceeds n - 1 = {n - 1}")
    betas, status = calibrate(kernels.sqdist(pts), target, on_degenerate="uniform")
    bad = status != kernels.OK
    if bad.any():
        if bad.all():
            raise DataError("no point has a usable bandwidth")
        fallback = float(np.median(betas[~bad]))
        log.warning("%d degenerate bandwidth rows; using median beta %g", bad.sum(), fallback)
        betas[bad] = fallback
    return KdeBandwidths(betas, ppx)


def fixed_bandwidths(n: int, h: float) -> KdeBandwidths:
    """Same bandwidth for every point (comparison mode)."""
    if not h > 0:
        raise ConfigError("fixed bandwidth must be positive")
    return KdeBandwidths(np.full(n, 1.0 / (h * h)), float("nan"))


def grid_for(points, bw: KdeBandwidths, grid_cells=DEFAULT_GRID, margin=DEFAULT_MARGIN):
    """Square grid of ``grid_cells`` per axis covering the points plus ``margin`` max bandwidths.

    Returns ``(x0, y0, cell_size)``.
    """
    if int(grid_cells) != grid_cells or grid_cells < 1:
        raise GridError(f"grid_cells must be a positive integer, got {grid_cells}")
    if margin < 0:
        raise GridError("margin must be non-negative")
    pts = np.asarray(points, dtype=np.float64)
    pad = margin * float(bw.h.max())
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    side = float((hi - lo).max())
    if not side > 0:
        raise GridError("grid has zero extent")
    centre = (lo + hi) / 2.0
    return float(centre[0] - side / 2.0), float(centre[1] - side / 2.0), side / grid_cells


def estimate_density(points, bw: KdeBandwidths, grid_cells=DEFAULT_GRID, margin=DEFAULT_MARGIN,
                     truncate=None, geometry=None) -> DensityRaster:
    """Evaluate the adaptive estimator at cell centres.

    ``truncate`` limits each kernel to that many bandwidths (mass beyond is
    dropped). ``geometry`` = ``(x0, y0, cell_size, width, height)`` forces a
    grid instead of deriving one from the points.
    """
    pts = np.asarray(points, dtype=np.float64)
    if geometry is None:
        x0, y0, S = grid_for(pts, bw, grid_cells, margin)
        nx = ny = int(grid_cells)
    else:
        x0, y0, S, nx, ny = geometry
        if nx < 1 or ny < 1 or not S > 0:
            raise GridError("grid needs positive cell counts and cell size")
    xc = x0 + (np.arange(nx) + 0.5) * S
    yc = y0 + (np.arange(ny) + 0.5) * S
    trunc = math.inf if truncate is None else float(truncate)
    raw = kernels.kde_grid(pts, bw.betas, xc, yc, trunc)
    return DensityRaster(x0, y0, S, raw * (S * S / pts.shape[0]))
