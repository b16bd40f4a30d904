"""Dataset ingestion, preprocessing and synthetic generation."""
import csv
import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import AsymmetryError, ConfigError, DataError, ParseError, RankError

MIN_POINTS = 4
SYMMETRY_RTOL = 1e-9
RAWBIN_HEADER = struct.Struct("<QQ")


class Kind(enum.Enum):
    COORDINATES = "coordinates"
    DISTANCES = "distances"


@dataclass(frozen=True, eq=False)
class DataSource:
    """n observations, either as coordinates (n x m) or pairwise distances (n x n).

    Precomputed distances are kept unsquared; squaring happens on access.
    """

    kind: Kind
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.float64, order="C")
        if mat.ndim != 2:
            raise DataError(f"expected a 2-D matrix, got shape {mat.shape}")
        if not np.isfinite(mat).all():
            raise DataError("matrix contains NaN or infinite entries")
        if mat.shape[0] < 1:
            raise DataError("no observations")
        if self.kind is Kind.DISTANCES:
            _check_distances(mat)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1] if self.kind is Kind.COORDINATES else 0

    @classmethod
    def coordinates(cls, X):
        return cls(Kind.COORDINATES, X)

    @classmethod
    def distances(cls, D):
        return cls(Kind.DISTANCES, D)

    def require_embeddable(self):
        if self.n < MIN_POINTS:
            raise DataError(f"need at least {MIN_POINTS} observations to embed, got {self.n}")

    def sq_distances(self, idx=None) -> np.ndarray:
        """Squared distance block among the observations ``idx`` (all if None)."""
        if self.kind is Kind.COORDINATES:
            X = self.matrix if idx is None else self.matrix[idx]
            return kernels.sqdist(X)
        D = self.matrix if idx is None else self.matrix[np.ix_(idx, idx)]
        return D * D


def _check_distances(mat):
    n, m = mat.shape
    if n != m:
        raise DataError(f"distance matrix must be square, got {mat.shape}")
    if (mat < 0).any():
        raise DataError("distance matrix has negative entries")
    if np.any(np.diag(mat) != 0):
        raise DataError("distance matrix must have a zero diagonal")
    scale = np.maximum(np.abs(mat), np.abs(mat.T))
    bad = np.abs(mat - mat.T) > SYMMETRY_RTOL * scale
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise AsymmetryError(f"distance matrix is not symmetric at ({i}, {j}): {mat[i, j]} vs {mat[j, i]}")


def pairwise_distance2(src: DataSource, i: int, j: int) -> float:
    n = src.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"indices ({i}, {j}) out of range for n={n}")
    if i == j:
        raise IndexError("self-distance is excluded")
    if src.kind is Kind.COORDINATES:
        d = src.matrix[i] - src.matrix[j]
        return float(d @ d)
    return float(src.matrix[i, j] ** 2)


def load_matrix(path, format="csv", distances=False, header=False) -> DataSource:
    """Read a coordinate or distance matrix from ``csv`` or ``rawbin``.

    ``rawbin`` is a 16-byte little-endian header ``(n, m)`` followed by n*m
    little-endian float64 values, row-major.
    """
    path = Path(path)
    if format == "csv":
        mat = _read_csv(path, header)
    elif format == "rawbin":
        mat = _read_rawbin(path)
    else:
        raise ConfigError(f"unknown format {format!r}")
    kind = Kind.DISTANCES if distances else Kind.COORDINATES
    return DataSource(kind, mat)


def _read_csv(path, header):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if rows and len(vals) != len(rows[0]):
                raise ParseError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _read_rawbin(path):
    raw = path.read_bytes()
    if len(raw) < RAWBIN_HEADER.size:
        raise ParseError(f"{path}: truncated header")
    n, m = RAWBIN_HEADER.unpack_from(raw)
    body = raw[RAWBIN_HEADER.size:]
    if len(body) != 8 * n * m:
        raise ParseError(f"{path}: expected {8 * n * m} payload bytes for {n}x{m}, got {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(n, m).astype(np.float64)


def write_rawbin(path, mat):
    mat = np.ascontiguousarray(mat, dtype="<f8")
    n, m = mat.shape
    with open(path, "wb") as fh:
        fh.write(RAWBIN_HEADER.pack(n, m))
        fh.write(mat.tobytes())


def write_csv(path, mat, header=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in np.asarray(mat):
            w.writerow([repr(float(v)) for v in row])


def whiten(src: DataSource, keep_dims: int) -> DataSource:
    """PCA whitening: project onto the top ``keep_dims`` components, unit variance each."""
    if src.kind is not Kind.COORDINATES:
        raise DataError("whitening needs coordinate data")
    if not 1 <= keep_dims <= src.m:
        raise ConfigError(f"keep_dims must be in [1, {src.m}], got {keep_dims}")
    X = src.matrix - src.matrix.mean(axis=0)
    cov = X.T @ X / (src.n - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    tol = evals[0] * max(cov.shape) * np.finfo(float).eps * 10 if evals[0] > 0 else 0.0
    if evals[keep_dims - 1] <= tol:
        rank = int((evals > tol).sum())
        raise RankError(f"data has rank {rank}, cannot keep {keep_dims} whitened dimensions")
    # fix eigenvector signs so the output is deterministic
    signs = np.sign(evecs[np.abs(evecs).argmax(axis=0), range(evecs.shape[1])])
    evecs = evecs * signs
    W = evecs[:, :keep_dims] / np.sqrt(evals[:keep_dims])
    return DataSource.coordinates(X @ W)


@dataclass(frozen=True)
class GmmSpec:
    """Equally weighted isotropic Gaussian mixture with unit component sd.

    Means are uniform in a hypercube of side ``separation * components**(1/dims)``.
    """

    dims: int
    components: int
    n: int
    seed: int = 0
    separation: float = 10.0

    def __post_init__(self):
        if self.dims < 1:
            raise ConfigError("dims must be >= 1")
        if self.components < 1:
            raise ConfigError("components must be >= 1")
        if self.n < self.components:
            raise ConfigError("n must be >= components")
        if self.separation <= 0:
            raise ConfigError("separation must be positive")

    @property
    def weights(self):
        return np.full(self.components, 1.0 / self.components)

    @classmethod
    def parse(cls, text: str) -> "GmmSpec":
        """Parse ``dims=5,components=8,n=2000,seed=3[,separation=10]``."""
        kwargs = {}
        for part in text.split(","):
            if not part.strip():
                continue
            key, sep, val = part.partition("=")
            key = key.strip()
            if not sep or key not in {"dims", "components", "n", "seed", "separation"}:
                raise ConfigError(f"bad GMM spec item {part!r}")
            try:
                kwargs[key] = float(val) if key == "separation" else int(val)
            except ValueError:
                raise ConfigError(f"bad GMM spec value {part!r}") from None
        missing = {"dims", "components", "n"} - kwargs.keys()
        if missing:
            raise ConfigError(f"GMM spec missing {sorted(missing)}")
        return cls(**kwargs)


def _draw_means(spec, rng):
    side = spec.separation * spec.components ** (1.0 / spec.dims)
    return rng.uniform(0.0, side, size=(spec.components, spec.dims))


def gmm_means(spec: GmmSpec) -> np.ndarray:
    return _draw_means(spec, np.random.default_rng(spec.seed))


def generate_gmm(spec: GmmSpec):
    """Sample ``spec.n`` rows; returns ``(DataSource, labels)``."""
    rng = np.random.default_rng(spec.seed)
    means = _draw_means(spec, rng)
    labels = rng.choice(spec.components, size=spec.n, p=spec.weights)
    X = means[labels] + rng.standard_normal((spec.n, spec.dims))
    return DataSource.coordinates(X), labels
