"""Water-track transform: density raster segmentation by peaks.

Cells are visited by decreasing density (ties by linear index). A cell takes
the label of its highest already-labelled 8-neighbour (ties to the lower
label); a cell with no labelled neighbour starts a new cluster if it is a
strict local maximum, otherwise it sits on a plateau and is moved behind the
other cells of equal density. When a whole equal-density run is
stuck, its first remaining cell seeds a new cluster. Labels therefore count
from the highest peak down.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass(frozen=True)
class Segmentation:
    labels: np.ndarray = field(repr=False)  # (height, width), 1-based
    # ((iy, ix), density) per cluster, in label order
    peaks: tuple

    @property
    def n_clusters(self) -> int:
        return len(self.peaks)


def _values(raster):
    v = np.asarray(getattr(raster, "values", raster), dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {v.shape}")
    if not np.isfinite(v).all() or (v < 0).any():
        raise ValueError("raster values must be finite and non-negative")
    return v


def descending_order(values) -> np.ndarray:
    """Linear cell ids by decreasing value, ties by increasing id."""
    return np.argsort(-values.ravel(), kind="stable")


def _segmentation(values, labels, peak_ids):
    nx = values.shape[1]
    flat = values.ravel()
    peaks = tuple(((int(c) // nx, int(c) % nx), float(flat[c])) for c in peak_ids)
    return Segmentation(labels, peaks)


def water_track(raster) -> Segmentation:
    v = _values(raster)
    labels, peak_ids = kernels.water_track(v, descending_order(v))
    return _segmentation(v, labels, peak_ids)


def label_points(seg: Segmentation, raster, points, clamp_cells: float = 1.0) -> np.ndarray:
    """Cluster label of the cell containing each point."""
    iy, ix = raster.cell_of(points, clamp_cells)
    return seg.labels[iy, ix]


def steepest_ascent_oracle(raster) -> Segmentation:
    """Brute-force hill climbing, for verification.

    From each cell repeatedly step to the highest strictly higher 8-neighbour
    (ties to the lowest linear id) until stuck; cells sharing a summit share a
    label. Summits are labelled by decreasing density, ties by linear id.
    """
    v = _values(raster)
    ny, nx = v.shape
    summit = np.full(ny * nx, -1, dtype=np.int64)
    flat = v.ravel()

    def up(c):
        iy, ix = divmod(c, nx)
        best, bv = -1, flat[c]
        for y in range(max(iy - 1, 0), min(iy + 2, ny)):
            for x in range(max(ix - 1, 0), min(ix + 2, nx)):
                q = y * nx + x
                if flat[q] > bv or (best >= 0 and flat[q] == bv and q < best):
                    best, bv = q, flat[q]
        return best

    for c in range(ny * nx):
        path = []
        q = c
        while summit[q] < 0:
            path.append(q)
            nxt = up(q)
            if nxt < 0:
                summit[q] = q
                break
            q = nxt
        for p in path:
            summit[p] = summit[q]
    tops = np.unique(summit)
    tops = tops[np.lexsort((tops, -flat[tops]))]
    rank = {int(t): i + 1 for i, t in enumerate(tops)}
    labels = np.array([rank[int(s)] for s in summit], dtype=np.int32).reshape(ny, nx)
    return _segmentation(v, labels, tops)
