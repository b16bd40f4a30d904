import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ptsne import data, embedcore, similarity
from ptsne.errors import DegenerateSpanError, ShapeError


def random_p(rng, z):
    C = rng.random((z, z))
    np.fill_diagonal(C, 0.0)
    C /= C.sum(axis=1, keepdims=True)
    return (C + C.T) / (2 * z)


def test_q_two_points():
    Q, _ = embedcore.q_affinities(np.array([[0.0, 0.0], [3.0, -1.0]]))
    np.testing.assert_array_equal(Q, [[0, 0.5], [0.5, 0]])


def test_q_coincident():
    Q, _ = embedcore.q_affinities(np.zeros((4, 2)))
    np.testing.assert_allclose(Q[~np.eye(4, dtype=bool)], 1 / 12, rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_q_normalized_symmetric(z, seed):
    Y = np.random.default_rng(seed).normal(size=(z, 2)) * 3
    Q, _ = embedcore.q_affinities(Y)
    assert abs(Q.sum() - 1.0) <= 1e-12
    np.testing.assert_array_equal(Q, Q.T)
    assert (np.diag(Q) == 0).all()


def test_kl_zero_when_p_equals_q():
    Y = np.random.default_rng(0).normal(size=(9, 2))
    Q, _ = embedcore.q_affinities(Y)
    assert abs(embedcore.kl_cost(Q, Y)) < 1e-10
    np.testing.assert_allclose(embedcore.gradient(Q, Y), 0.0, atol=1e-10)
    # pseudo-norm at P = Q is H(P) relative to the uniform cost
    nz = Q[Q > 0]
    h = -(nz * np.log(nz)).sum()
    assert embedcore.pseudo_norm_cost(Q, Y) == pytest.approx(h / (math.log(9) + math.log(8)), rel=1e-12)
    assert embedcore.pseudo_norm_cost(Q, Y) == pytest.approx(oracles.pseudo_norm(Q, Y), rel=1e-12)


def test_kl_hand_instance():
    Y = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    P = np.array([[0, 0.2, 0.1], [0.2, 0, 0.2], [0.1, 0.2, 0]])
    assert embedcore.kl_cost(P, Y) == pytest.approx(oracles.kl(P, Y), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 30), st.integers(0, 2**32 - 1))
def test_kl_nonnegative_and_identity(z, seed):
    rng = np.random.default_rng(seed)
    P = random_p(rng, z)
    Y = rng.normal(size=(z, 2))
    kl = embedcore.kl_cost(P, Y)
    assert kl >= -1e-12
    nz = P[P > 0]
    ident = (math.log(z) + math.log(z - 1)) * embedcore.pseudo_norm_cost(P, Y) + (nz * np.log(nz)).sum()
    assert kl == pytest.approx(ident, abs=1e-10)
    assert kl == pytest.approx(oracles.kl(P, Y), abs=1e-10)


def test_uniform_q_gives_exact_one():
    # two points: Q is uniform for any layout
    P = np.array([[0, 0.5], [0.5, 0]])
    assert abs(embedcore.pseudo_norm_cost(P, np.array([[0.0, 0.0], [5.0, 1.0]])) - 1.0) <= 1e-12
    # coincident points: Q uniform, any P
    P = random_p(np.random.default_rng(1), 6)
    assert abs(embedcore.pseudo_norm_cost(P, np.zeros((6, 2))) - 1.0) <= 1e-12


def test_gradient_finite_difference_z12():
    rng = np.random.default_rng(12)
    P = random_p(rng, 12)
    Y = rng.normal(size=(12, 2))
    g = embedcore.gradient(P, Y)
    fd = oracles.fd_gradient(P, Y)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-5


def test_gradient_backends_agree(backend):
    rng = np.random.default_rng(2)
    P = random_p(rng, 25)
    Y = rng.normal(size=(25, 2))
    ref = oracles.fd_gradient(P, Y)
    g = backend.tsne_gradient(P, Y)
    assert np.max(np.abs(g - ref)) / np.max(np.abs(ref)) < 1e-5
    assert backend.cross_entropy(P, Y) == pytest.approx(
        oracles.kl(P, Y) - (P[P > 0] * np.log(P[P > 0])).sum(), rel=1e-12)


def test_two_point_gradient_attracts():
    # two points always have q01 = 0.5, so use three to get p01 > q01
    Y = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    P = np.array([[0, 0.4, 0.05], [0.4, 0, 0.05], [0.05, 0.05, 0]])
    Q, _ = embedcore.q_affinities(Y)
    assert P[0, 1] > Q[0, 1]
    before = np.linalg.norm(Y[0] - Y[1])
    Y2 = embedcore.step(P, Y, eta=0.1)
    assert np.linalg.norm(Y2[0] - Y2[1]) < before
    assert embedcore.kl_cost(P, Y2) < embedcore.kl_cost(P, Y)


def test_learning_rate():
    Y = np.array([[-1.0, 0.0], [1.0, 0.5]])
    assert embedcore.learning_rate(Y, math.e + 1) == pytest.approx(1.0, rel=1e-15)
    assert embedcore.learning_rate(2 * Y, math.e + 1) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(DegenerateSpanError):
        embedcore.learning_rate(Y, 2)
    with pytest.raises(DegenerateSpanError):
        embedcore.learning_rate(np.zeros((4, 2)), 4)


def test_step_fixed_point_and_floor():
    Y = np.random.default_rng(3).normal(size=(7, 2))
    Q, _ = embedcore.q_affinities(Y)
    np.testing.assert_allclose(embedcore.step(Q, Y), Y, atol=1e-12)
    # zero span falls back to the floor learning rate and stays finite
    P = random_p(np.random.default_rng(4), 5)
    out = embedcore.step(P, np.zeros((5, 2)))
    assert np.isfinite(out).all()


def test_step_small_eta_decreases_cost_and_is_deterministic():
    rng = np.random.default_rng(5)
    P = random_p(rng, 15)
    Y = rng.normal(size=(15, 2))
    a = embedcore.step(P, Y, eta=1e-3)
    b = embedcore.step(P, Y, eta=1e-3)
    assert a.tobytes() == b.tobytes()
    assert embedcore.kl_cost(P, a) <= embedcore.kl_cost(P, Y)


def test_shape_checks():
    with pytest.raises(ShapeError):
        embedcore.kl_cost(np.zeros((3, 3)), np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        embedcore.gradient(np.zeros((3, 3)), np.zeros((3, 3)))


def test_joint_affinity_object_accepted():
    Y = np.random.default_rng(6).normal(size=(6, 2))
    P = similarity.symmetrize(np.full((6, 6), 0.2) * (1 - np.eye(6)))
    assert embedcore.kl_cost(P, Y) == embedcore.kl_cost(P.p, Y)


def test_cost_report():
    rng = np.random.default_rng(7)
    P = random_p(rng, 10)
    Y = rng.normal(size=(10, 2))
    r = embedcore.cost_report(P, Y)
    assert r.kl == embedcore.kl_cost(P, Y)
    assert r.pseudo_norm == embedcore.pseudo_norm_cost(P, Y)
    assert r.size == pytest.approx(np.hypot(*np.ptp(Y, axis=0)))


def test_single_chunk_run_lowers_cost():
    src, _ = data.generate_gmm(data.GmmSpec(dims=4, components=2, n=120, seed=2))
    P = similarity.joint_affinity(src.sq_distances(), similarity.PerplexityTarget(20.0))
    Y0 = np.random.default_rng(0).uniform(-1, 1, size=(120, 2))
    Y = embedcore.optimize(P, Y0, iters=4 * math.ceil(math.sqrt(120)))
    assert embedcore.pseudo_norm_cost(P, Y) < embedcore.pseudo_norm_cost(P, Y0)
