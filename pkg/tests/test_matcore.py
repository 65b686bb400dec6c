import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hypercone.matcore import (AsymmetryError, MatrixOverflowError, expm, min_eig,
                               orthonormalize, singular_values, svd, sym_eig)


def random_symmetric(rng, n):
    A = rng.standard_normal((n, n))
    return 0.5 * (A + A.T)


def test_sym_eig_identity():
    w, V = sym_eig(np.eye(3))
    assert np.allclose(w, [1, 1, 1])
    assert np.allclose(V.T @ V, np.eye(3))


def test_sym_eig_diagonal_sorted():
    w, _ = sym_eig(np.diag([-2.0, 5.0, 1.0]))
    assert np.allclose(w, [-2, 1, 5])


def test_sym_eig_reconstruction_5x5():
    S = random_symmetric(np.random.default_rng(0), 5)
    w, V = sym_eig(S)
    assert np.max(np.abs(V @ np.diag(w) @ V.T - S)) < 1e-10
    assert np.max(np.abs(V.T @ V - np.eye(5))) < 1e-10
    assert np.all(np.diff(w) >= 0)


def test_sym_eig_small_cases_match_characteristic_roots():
    rng = np.random.default_rng(1)
    for n in (2, 3):
        for _ in range(20):
            S = random_symmetric(rng, n)
            roots = np.sort(np.roots(np.poly(S)).real)
            assert np.allclose(sym_eig(S)[0], roots, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_sym_eig_residual(n, seed):
    S = random_symmetric(np.random.default_rng(seed), n) * 10.0 ** np.random.default_rng(seed).uniform(-3, 3)
    w, V = sym_eig(S)
    assert np.max(np.abs(S @ V - V * w)) < 1e-10 * (1 + np.max(np.abs(S)))
    assert np.max(np.abs(V.T @ V - np.eye(n))) < 1e-10


def test_sym_eig_rejects_asymmetry_with_measure():
    S = np.array([[1.0, 2.0], [2.1, 1.0]])
    with pytest.raises(AsymmetryError) as info:
        sym_eig(S)
    assert info.value.asymmetry == pytest.approx(0.1)


def test_min_eig_matches_lapack_on_stacks():
    rng = np.random.default_rng(2)
    S = np.array([random_symmetric(rng, 4) for _ in range(7)])
    assert np.allclose(min_eig(S), np.linalg.eigvalsh(S)[:, 0])


def test_expm_trivial_cases():
    assert np.array_equal(expm(np.zeros((3, 3)), 2.5), np.eye(3))
    a, b, c = 0.3, -1.2, 2.0
    assert np.allclose(expm(np.diag([a, b, c])), np.diag(np.exp([a, b, c])), rtol=1e-14)
    assert np.allclose(expm(np.array([[0.0, 1.0], [0.0, 0.0]])), [[1, 1], [0, 1]], atol=1e-15)


def test_expm_against_scipy_up_to_norm_50():
    rng = np.random.default_rng(3)
    for target in (0.1, 1.0, 5.0, 20.0, 50.0):
        for _ in range(5):
            A = rng.standard_normal((4, 4))
            A *= target / np.linalg.norm(A, 1)
            ref = scipy.linalg.expm(A)
            assert np.linalg.norm(expm(A) - ref) <= 1e-10 * np.linalg.norm(ref)


def test_expm_semigroup_and_liouville():
    rng = np.random.default_rng(4)
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        A *= 5.0 / np.linalg.norm(A, 1)
        s, t = rng.uniform(-2, 2, 2)
        assert np.allclose(expm(A, s + t), expm(A, s) @ expm(A, t), rtol=1e-9, atol=1e-9)
        assert np.linalg.det(expm(A, t)) == pytest.approx(np.exp(t * np.trace(A)), rel=1e-9)


def test_expm_overflow_is_reported():
    with pytest.raises(MatrixOverflowError):
        expm(np.diag([800.0, 0.0]))


def test_svd_trivial_cases():
    assert np.allclose(svd(np.eye(3))[1], [1, 1, 1])
    assert np.allclose(svd(np.diag([3.0, -2.0]))[1], [3, 2])


def power_iteration_norm(A, iters=2000):
    v = np.ones(A.shape[1])
    for _ in range(iters):
        v = A.T @ (A @ v)
        v /= np.linalg.norm(v)
    return np.linalg.norm(A @ v)


def test_svd_top_singular_value_matches_power_iteration():
    A = np.random.default_rng(5).standard_normal((4, 4))
    assert svd(A)[1][0] == pytest.approx(power_iteration_norm(A), abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)))
def test_svd_reconstruction_and_orthogonality(A):
    U, s, V = svd(A)
    assert np.max(np.abs(U @ np.diag(s) @ V.T - A)) < 1e-10 * (1 + np.max(np.abs(A)))
    assert np.max(np.abs(U.T @ U - np.eye(4))) < 1e-10
    assert np.max(np.abs(V.T @ V - np.eye(4))) < 1e-10
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


def test_svd_graded_diagonal_keeps_left_vectors():
    # singular values spanning 38 orders of magnitude
    A = np.diag([np.exp(29.6), np.exp(-57.0), np.exp(-6.7)])
    U, s, V = svd(A)
    assert np.allclose(np.abs(U), np.abs(V))
    assert np.allclose(U @ np.diag(s) @ V.T, A, rtol=0, atol=1e-3)
    assert s[2] == pytest.approx(np.exp(-57.0), rel=1e-12)


def test_svd_submultiplicative():
    rng = np.random.default_rng(6)
    for _ in range(50):
        A, B = rng.standard_normal((2, 5, 5))
        assert singular_values(A @ B)[0] <= singular_values(A)[0] * singular_values(B)[0] + 1e-12


def test_orthonormalize_spans_input():
    B = np.random.default_rng(7).standard_normal((5, 2))
    Q = orthonormalize(B)
    assert np.allclose(Q.T @ Q, np.eye(2))
    assert np.allclose(Q @ (Q.T @ B), B)
