import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attnlab.linalg import ShapeError, gaussian_matrix, make_rng, matmul, sym_eig_top

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_matmul_identity():
    M = np.array([[1.0, -2.0, 3.0], [4.0, 5.0, 6.5]])
    np.testing.assert_array_equal(matmul(np.eye(2), M), M)
    np.testing.assert_array_equal(matmul(M, np.eye(3)), M)


def test_matmul_hand_example():
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17.0], [39.0]])


def test_matmul_zero():
    np.testing.assert_array_equal(matmul(np.zeros((2, 3)), np.ones((3, 1))), np.zeros((2, 1)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"2x3 by 2x2"):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_matmul_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        matmul([[1e308, 1e308]], [[1e308], [1e308]])


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_matmul_identity_property(M):
    np.testing.assert_array_equal(matmul(np.eye(M.shape[0]), M), M)
    np.testing.assert_array_equal(matmul(M, np.eye(M.shape[1])), M)


def test_gaussian_zero_scale():
    np.testing.assert_array_equal(gaussian_matrix(make_rng(0), 3, 4, 0.0), np.zeros((3, 4)))


def test_gaussian_negative_scale_rejected():
    with pytest.raises(ValueError):
        gaussian_matrix(make_rng(0), 2, 2, -1.0)


def test_gaussian_deterministic():
    a = gaussian_matrix(make_rng(7), 5, 5, 1.0)
    b = gaussian_matrix(make_rng(7), 5, 5, 1.0)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, gaussian_matrix(make_rng(8), 5, 5, 1.0))


def test_gaussian_sample_std():
    x = gaussian_matrix(make_rng(123), 1000, 1000, 0.1)
    assert 0.099 <= x.std() <= 0.101
    assert abs(x.mean()) < 1e-3


@given(st.integers(0, 2**63 - 1))
@settings(max_examples=25)
def test_rng_streams_equal_under_equal_seeds(seed):
    assert np.array_equal(make_rng(seed).random(16), make_rng(seed).random(16))


def test_eig_diagonal():
    vals, vecs = sym_eig_top(np.diag([3.0, 1.0]), 2)
    np.testing.assert_allclose(vals, [3.0, 1.0])
    np.testing.assert_allclose(vecs, np.eye(2), atol=1e-15)


def test_eig_two_by_two():
    vals, vecs = sym_eig_top([[2.0, 1.0], [1.0, 2.0]], 2)
    np.testing.assert_allclose(vals, [3.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(vecs[:, 0], [2**-0.5, 2**-0.5], atol=1e-14)


def test_eig_identity_top1():
    vals, vecs = sym_eig_top(np.eye(4), 1)
    np.testing.assert_allclose(vals, [1.0])
    assert vecs.shape == (4, 1)


def test_eig_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        sym_eig_top([[1.0, 2.0], [0.0, 1.0]], 1)


def test_eig_rejects_bad_k():
    with pytest.raises(ValueError):
        sym_eig_top(np.eye(3), 4)
    with pytest.raises(ShapeError):
        sym_eig_top(np.ones((2, 3)), 1)


@given(st.integers(1, 32), st.integers(0, 10_000))
@settings(max_examples=40)
def test_eig_residual_and_conventions(n, seed):
    A = make_rng(seed).standard_normal((n, n))
    C = (A + A.T) / 2
    k = max(1, n // 2)
    vals, vecs = sym_eig_top(C, k)
    assert np.all(np.diff(vals) <= 1e-12)
    np.testing.assert_allclose(np.linalg.norm(vecs, axis=0), 1.0, atol=1e-12)
    assert np.max(np.abs(C @ vecs - vecs * vals)) < 1e-8
    for col in vecs.T:
        assert col[np.argmax(np.abs(col))] > 0
    # independent oracle
    np.testing.assert_allclose(vals, np.sort(np.linalg.eigvalsh(C))[::-1][:k], atol=1e-9)
