import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from powersched.errors import DimensionError, InfeasibleError
from powersched.linalg import (controllability_rank, dlyap_discounted, is_psd, riccati_backward,
                               riccati_residual, riccati_stationary, spectral_radius)

A2 = np.diag([1.3, -1.1])
B2 = np.array([[0.1], [0.1]])


def scalar_are_root(a=1.3, b=0.1, q=1.0, r=1.0, g=0.9):
    # P = q + g a^2 P - (g a b P)^2 / (r + g b^2 P), cleared of the denominator
    c2, c1, c0 = scalar_are_coeffs(a, b, q, r, g)
    return (-c1 + math.sqrt(c1 * c1 - 4 * c2 * c0)) / (2 * c2)


def scalar_are_coeffs(a, b, q, r, g):
    return g * b * b, r * (1 - g * a * a) - q * g * b * b, -q * r


def discounted_are_oracle(A, B, Q, R, g):
    # the discounted equation is the standard one for (sqrt(g) A, sqrt(g) B)
    return sla.solve_discrete_are(math.sqrt(g) * A, math.sqrt(g) * B, Q, R)


@pytest.mark.parametrize("M, rho", [(np.eye(2), 1.0), (A2, 1.3),
                                    (np.array([[0.0, 2.0], [-0.5, 0.0]]), 1.0)])
def test_spectral_radius_examples(M, rho):
    assert spectral_radius(M) == pytest.approx(rho, rel=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
def test_spectral_radius_matches_eigvals(vals):
    for n in (1, 2, 3):
        M = np.array(vals[: n * n]).reshape(n, n)
        assert spectral_radius(M) == pytest.approx(np.abs(np.linalg.eigvals(M)).max(), abs=1e-9)


def test_scalar_root_is_the_frozen_value():
    P = scalar_are_root()
    assert P == pytest.approx(60.72, abs=5e-3)
    np.testing.assert_allclose(scalar_are_coeffs(1.3, 0.1, 1.0, 1.0, 0.9), (0.009, -0.530, -1.0))


def test_stationary_scalar_matches_closed_form():
    g = riccati_stationary([[1.3]], [[0.1]], [[1.0]], [[1.0]], 0.9)
    assert g.P[0, 0] == pytest.approx(scalar_are_root(), rel=1e-6)
    L_expected = 0.9 * 0.1 * g.P[0, 0] * 1.3 / (1 + 0.9 * 0.01 * g.P[0, 0])
    assert g.L[0, 0] == pytest.approx(L_expected, rel=1e-10)
    assert g.L[0, 0] == pytest.approx(4.594, abs=2e-3)


def test_stationary_paper_system_residual_and_oracle():
    g = riccati_stationary(A2, B2, np.eye(2), [[1.0]], 0.9)
    assert riccati_residual(A2, B2, np.eye(2), [[1.0]], 0.9, g.P) <= 1e-9
    np.testing.assert_allclose(g.P, discounted_are_oracle(A2, B2, np.eye(2), np.eye(1), 0.9),
                               rtol=1e-8)
    assert is_psd(g.Sigma)


def test_stationary_matches_long_backward_pass():
    T = 2000
    g = riccati_backward(A2, B2, np.eye(2), [[1.0]], np.eye(2), 0.9, T)
    s = riccati_stationary(A2, B2, np.eye(2), [[1.0]], 0.9)
    np.testing.assert_allclose(g.P[0], s.P, rtol=1e-9)
    np.testing.assert_allclose(g.Sigma[0], s.Sigma, rtol=1e-8, atol=1e-10)


def test_backward_trivial_cases():
    Q = np.diag([2.0, 3.0])
    g = riccati_backward(np.zeros((2, 2)), B2, Q, [[1.0]], Q, 0.9, 5)
    for k in range(5):
        np.testing.assert_allclose(g.P[k], Q)
    g = riccati_backward(A2, np.zeros((2, 1)), np.eye(2), [[1.0]], np.eye(2), 0.9, 4)
    for k in range(4):
        np.testing.assert_allclose(g.P[k], np.eye(2) + 0.9 * A2.T @ g.P[k + 1] @ A2)
        np.testing.assert_allclose(g.L[k], 0.0)
    np.testing.assert_allclose(g.Sigma[4], 0.0)


def test_backward_against_naive_loop():
    T, gam = 7, 0.8
    Q, R, QN = np.eye(2), np.array([[0.5]]), 2 * np.eye(2)
    g = riccati_backward(A2, B2, Q, R, QN, gam, T)
    P = QN
    for k in range(T - 1, -1, -1):
        M = R + gam * B2.T @ P @ B2
        L = gam * np.linalg.solve(M, B2.T @ P @ A2)
        np.testing.assert_allclose(g.L[k], L, rtol=1e-12)
        np.testing.assert_allclose(g.Sigma[k], L.T @ M @ L, rtol=1e-12)
        P = Q + gam * A2.T @ P @ A2 - gam * A2.T @ P @ B2 @ L
        np.testing.assert_allclose(g.P[k], P, rtol=1e-12)


@given(st.floats(-1.5, 1.5), st.floats(0.05, 1.0), st.floats(0.1, 3.0), st.floats(0.1, 0.99))
def test_stationary_scalar_property(a, b, r, gam):
    g = riccati_stationary([[a]], [[b]], [[1.0]], [[r]], gam)
    oracle = discounted_are_oracle(np.array([[a]]), np.array([[b]]), np.eye(1), np.array([[r]]), gam)
    assert g.P[0, 0] == pytest.approx(oracle[0, 0], rel=1e-7)
    assert g.P[0, 0] >= 1.0 - 1e-12
    assert g.Sigma[0, 0] >= 0


def test_dlyap_examples():
    np.testing.assert_allclose(dlyap_discounted(A2, np.eye(2), 0.0), np.eye(2))
    th = dlyap_discounted([[1.3]], [[1.0]], 0.9 * 0.2)
    assert th[0, 0] == pytest.approx(1 / (1 - 0.18 * 1.69), rel=1e-12)
    assert th[0, 0] == pytest.approx(1.4372, abs=1e-4)
    with pytest.raises(InfeasibleError):
        dlyap_discounted([[1.3]], [[1.0]], 1.05 / 1.69)


@given(st.floats(0.0, 0.55), st.integers(0, 10_000))
def test_dlyap_matches_scipy(s, seed):
    r = np.random.default_rng(seed)
    A = r.normal(size=(3, 3))
    A *= 1.2 / spectral_radius(A)
    S = r.normal(size=(3, 3))
    S = S @ S.T
    th = dlyap_discounted(A, S, s)
    np.testing.assert_allclose(th, sla.solve_discrete_lyapunov(math.sqrt(s) * A.T, S),
                               rtol=1e-8, atol=1e-10)
    assert is_psd(th)


def test_controllability_and_shapes():
    assert controllability_rank(A2, B2) == 2
    assert controllability_rank(np.eye(2), B2) == 1
    with pytest.raises(DimensionError):
        dlyap_discounted(np.eye(2), np.eye(3), 0.1)
