import numpy as np
import pytest
from hypothesis import given, strategies as st

from powersched.control import (LoopState, SystemModel, control_input, error_step,
                                estimator_step, plant_step)
from powersched.errors import DimensionError, DomainError
from powersched.presets import paper_model

A2 = np.diag([1.3, -1.1])
B2 = np.array([[0.1], [0.1]])
vec2 = st.lists(st.floats(-10, 10), min_size=2, max_size=2).map(np.array)


def test_control_input_examples(smodel):
    L = smodel.gains().L
    assert control_input(L, np.zeros(1)) == pytest.approx([0.0])
    assert control_input(L, np.ones(1))[0] == pytest.approx(-4.594, abs=2e-3)


@given(vec2, st.floats(-5, 5))
def test_control_linear(x, c):
    L = np.array([[4.3, -1.2]])
    np.testing.assert_allclose(control_input(L, c * x), c * control_input(L, x), atol=1e-9)


def test_plant_examples():
    np.testing.assert_allclose(plant_step(A2, B2, np.zeros(2), [0.0], np.zeros(2)), 0.0)
    np.testing.assert_allclose(plant_step(A2, B2, np.ones(2), [0.0], np.zeros(2)), [1.3, -1.1])


@given(vec2, vec2, st.floats(-3, 3), st.floats(-3, 3), vec2, vec2)
def test_plant_superposition(x1, x2, u1, u2, w1, w2):
    lhs = plant_step(A2, B2, x1 + x2, [u1 + u2], w1 + w2)
    rhs = plant_step(A2, B2, x1, [u1], w1) + plant_step(A2, B2, x2, [u2], w2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_error_step_examples():
    w = np.array([0.1, 0.1])
    np.testing.assert_allclose(error_step(A2, np.array([1.0, 0.0]), w, 1), w)
    np.testing.assert_allclose(error_step(A2, np.array([1.0, 2.0]), np.zeros(2), 0), [1.3, -2.2])
    np.testing.assert_allclose(error_step(A2, np.array([1.0, 0.0]), w, 0), [1.4, 0.1])
    with pytest.raises(DomainError):
        error_step(A2, w, w, 2)


def test_estimator_branches():
    st_ = LoopState(x=np.array([1.0, 2.0]), xhat=np.array([0.5, 0.5]), u_prev=np.array([0.3]),
                    x_prev=np.array([1.0, -1.0]), delta_prev=1)
    np.testing.assert_allclose(estimator_step(st_, A2, B2), A2 @ [1.0, -1.0] + B2 @ [0.3])
    st_.delta_prev, st_.u_prev = 0, np.zeros(1)
    np.testing.assert_allclose(estimator_step(st_, A2, B2), A2 @ [0.5, 0.5])


@given(st.integers(0, 2**32 - 1))
def test_estimator_matches_error_recursion(seed):
    r = np.random.default_rng(seed)
    m = paper_model()
    L = m.gains().L
    s = LoopState.initial(m, r.normal(size=2) * 0.1)
    e = s.e.copy()
    for _ in range(30):
        u = control_input(L, s.xhat)
        w = r.normal(size=2) * 0.03
        d = int(r.random() < 0.5)
        s.advance(m.A, m.B, u, w, d)
        e = error_step(m.A, e, w, d)
        np.testing.assert_allclose(s.xhat, s.x - e, atol=1e-12)
        np.testing.assert_allclose(s.e, e, atol=1e-12)


def test_model_validation():
    m = paper_model()
    assert (m.n, m.m, m.scalar) == (2, 1, False)
    with pytest.raises(DimensionError):
        m.with_(B=np.ones((3, 1)))
    with pytest.raises(DomainError):
        m.with_(W=-np.eye(2))
    with pytest.raises(DomainError):
        m.with_(R=[[0.0]])
    with pytest.raises(DomainError):
        m.with_(gamma=1.5)
    with pytest.raises(DimensionError):
        m.with_(xbar0=[0.0])


def test_gain_modes(smodel):
    g = smodel.gains("finite", T=5)
    assert g.L.shape == (5, 1, 1) and g.Sigma.shape == (6, 1, 1)
    assert g.Sigma[5, 0, 0] == 0.0
    L_seq, S_seq = smodel.gains().expand(4)
    assert L_seq.shape == (4, 1, 1) and S_seq.shape == (5, 1, 1)
    with pytest.raises(ValueError):
        smodel.gains("finite")
    with pytest.raises(ValueError):
        smodel.gains("bogus")
    assert isinstance(SystemModel, type)
