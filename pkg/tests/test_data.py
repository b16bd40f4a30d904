import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ptsne import data
from ptsne.data import DataSource, GmmSpec, Kind
from ptsne.errors import AsymmetryError, ConfigError, DataError, ParseError, RankError


def test_load_csv_coordinates(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("0,0\n1,0\n0,1\n")
    src = data.load_matrix(f)
    assert src.kind is Kind.COORDINATES
    assert (src.n, src.m) == (3, 2)
    np.testing.assert_array_equal(src.matrix, [[0, 0], [1, 0], [0, 1]])


def test_load_csv_header(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("a,b\n0,0\n1,0\n")
    assert data.load_matrix(f, header=True).n == 2
    with pytest.raises(ParseError):
        data.load_matrix(f)


def test_load_distances(tmp_path):
    D = np.array([[0, 1, 2, 3], [1, 0, 1, 2], [2, 1, 0, 1], [3, 2, 1, 0]], float)
    f = tmp_path / "d.csv"
    data.write_csv(f, D)
    src = data.load_matrix(f, distances=True)
    assert src.kind is Kind.DISTANCES
    assert src.n == 4
    assert src.m == 0


def test_asymmetric_distances(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("0,1,2\n1,0,5\n2,7,0\n")
    with pytest.raises(AsymmetryError):
        data.load_matrix(f, distances=True)


@pytest.mark.parametrize("text", ["0,1\n1\n", "0,x\n", "", "nan,1\n"])
def test_malformed_csv(tmp_path, text):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(DataError):
        data.load_matrix(f)


def test_rawbin_roundtrip(tmp_path):
    X = np.random.default_rng(0).normal(size=(7, 3))
    f = tmp_path / "x.bin"
    data.write_rawbin(f, X)
    raw = f.read_bytes()
    assert raw[:16] == (7).to_bytes(8, "little") + (3).to_bytes(8, "little")
    np.testing.assert_array_equal(data.load_matrix(f, "rawbin").matrix, X)
    f.write_bytes(raw[:-8])
    with pytest.raises(ParseError):
        data.load_matrix(f, "rawbin")


def test_distance_validation():
    with pytest.raises(DataError):
        DataSource.distances([[0, 1], [1, 1]])
    with pytest.raises(DataError):
        DataSource.distances([[0, -1], [-1, 0]])
    # within relative tolerance
    DataSource.distances([[0, 1.0], [1.0 + 1e-12, 0]])


def test_matrix_is_read_only():
    src = DataSource.coordinates(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        src.matrix[0, 0] = 1.0


def test_require_embeddable():
    DataSource.coordinates(np.eye(4)).require_embeddable()
    with pytest.raises(DataError):
        DataSource.coordinates(np.eye(3)).require_embeddable()


def test_pairwise_distance2_examples():
    assert data.pairwise_distance2(DataSource.coordinates([[0, 0], [3, 4]]), 0, 1) == 25.0
    assert data.pairwise_distance2(DataSource.distances([[0, 2], [2, 0]]), 0, 1) == 4.0
    with pytest.raises(IndexError):
        data.pairwise_distance2(DataSource.coordinates([[0, 0], [3, 4]]), 1, 1)
    with pytest.raises(IndexError):
        data.pairwise_distance2(DataSource.coordinates([[0, 0], [3, 4]]), 0, 2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3)))
def test_pairwise_symmetric_nonnegative(X):
    src = DataSource.coordinates(X)
    D2 = src.sq_distances()
    assert (D2 >= 0).all()
    np.testing.assert_array_equal(D2, D2.T)
    for i in range(src.n):
        for j in range(i + 1, src.n):
            assert data.pairwise_distance2(src, i, j) == pytest.approx(D2[i, j], rel=1e-12, abs=1e-9)


def test_sq_distances_subset_of_distances():
    D = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], float)
    src = DataSource.distances(D)
    np.testing.assert_array_equal(src.sq_distances(np.array([0, 2])), [[0, 4], [4, 0]])


def test_whiten_fixed_point():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(400, 3))
    # exact zero mean, identity sample covariance
    X -= X.mean(axis=0)
    L = np.linalg.cholesky(X.T @ X / (len(X) - 1))
    X = X @ np.linalg.inv(L).T
    out = data.whiten(DataSource.coordinates(X), 3).matrix
    np.testing.assert_allclose(out.T @ out / (len(out) - 1), np.eye(3), atol=1e-8)


def test_whiten_rank_error():
    t = np.linspace(0, 1, 20)
    with pytest.raises(RankError):
        data.whiten(DataSource.coordinates(np.column_stack([t, 2 * t])), 2)


def test_whiten_covariance_against_direct_product():
    X = np.random.default_rng(2).normal(size=(50, 5))
    out = data.whiten(DataSource.coordinates(X), 3).matrix
    cov = np.zeros((3, 3))
    for row in out:
        cov += np.outer(row, row)
    cov /= len(out) - 1
    np.testing.assert_allclose(cov, np.eye(3), atol=1e-6)
    np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-12)


def test_whiten_idempotent():
    X = np.random.default_rng(3).normal(size=(80, 4)) @ np.diag([5, 2, 1, 0.1])
    once = data.whiten(DataSource.coordinates(X), 4)
    twice = data.whiten(once, 4).matrix
    np.testing.assert_allclose(twice.T @ twice / (len(twice) - 1), np.eye(4), atol=1e-8)


def test_whiten_rejects_distances():
    with pytest.raises(DataError):
        data.whiten(DataSource.distances(np.zeros((4, 4))), 1)


def test_gmm_single_component_mean():
    spec = GmmSpec(dims=2, components=1, n=100, seed=7)
    src, labels = data.generate_gmm(spec)
    assert (labels == 0).all()
    mu = data.gmm_means(spec)[0]
    assert np.all(np.abs(src.matrix.mean(axis=0) - mu) < 4 / np.sqrt(100))


def test_gmm_deterministic():
    spec = GmmSpec(dims=3, components=4, n=200, seed=5)
    a, la = data.generate_gmm(spec)
    b, lb = data.generate_gmm(spec)
    assert a.matrix.tobytes() == b.matrix.tobytes()
    np.testing.assert_array_equal(la, lb)


def test_gmm_label_count():
    _, labels = data.generate_gmm(GmmSpec(dims=2, components=5, n=5, seed=0))
    assert np.bincount(labels, minlength=5).sum() == 5


def test_gmm_spec_validation_and_parse():
    assert GmmSpec(2, 4, 10).weights.sum() == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        GmmSpec(2, 0, 10)
    with pytest.raises(ConfigError):
        GmmSpec(2, 5, 4)
    spec = GmmSpec.parse("dims=5,components=8,n=2000,seed=3")
    assert spec == GmmSpec(5, 8, 2000, 3)
    for bad in ("dims=5,components=8", "dims=5,components=x,n=3", "foo=1,dims=1,components=1,n=1"):
        with pytest.raises(ConfigError):
            GmmSpec.parse(bad)
