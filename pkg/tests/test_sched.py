import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from powersched.channel import (ChannelModel, Degenerate, PoissonTruncated, TruncatedNormal,
                                Uniform, drop_prob, power_for, q_tail_inv)
from powersched.errors import DomainError, InfeasibleError, UsageError
from powersched.kernels import opt_amplitude, opt_amplitude_np
from powersched.sched import (ConstantPower, GreedyKnown, GreedyMean, GridDPFinite, GridDPInfinite,
                              GridSpec, OptimalConstant, SCHEDULER_KINDS, _constant_objective,
                              constant_drop_range, golden_section, greedy_drop, greedy_mean_drop,
                              optimal_constant, policy_decide, scheduler_from_dict,
                              scheduler_to_dict, stage_cost)

CH = ChannelModel(3.0, 1.0, 3.0)
A1, S1 = np.array([[1.3]]), np.array([[1.0]])


def dense_argmin_q(c, a, lam, gamma, ch, step=1e-6):
    """Brute-force argmin of lam p(q, a) + gamma q c over [q_m(a), 1]."""
    lo = float(drop_prob(ch.p_max, a, ch))
    q = np.arange(lo, 1.0, step)
    q = np.append(q, 1.0)
    p = np.zeros_like(q)
    p[:-1] = power_for(q[:-1], a, ch)
    g = lam * p + gamma * q * c
    return q[np.argmin(g)]


def test_stage_cost_examples():
    assert stage_cost([0.0], 0.3, 1.0, A1, S1, 1.0, 0.9, CH) == 0.0
    assert stage_cost([2.0], 0.3, 1.0, A1, S1, 1.0, 0.9, CH) == pytest.approx(0.9 * 1.69 * 4)
    g = stage_cost([1.0], 0.0, 0.5, A1, S1, 1.0, 0.9, CH)
    assert g == pytest.approx(q_tail_inv(0.25) ** 2 / 3 + 0.9 * 0.5 * 1.69, rel=1e-12)
    assert g == pytest.approx(0.912, abs=1e-3)
    with pytest.raises(InfeasibleError):
        stage_cost([1.0], 0.0, 1e-4, A1, S1, 1.0, 0.9, CH)


def test_greedy_trivial():
    assert greedy_drop([0.0], 0.5, A1, S1, 1.0, 0.9, CH) == (1.0, 0.0)
    q, p = greedy_drop([1.0], 0.5, A1, S1, 1e9, 0.9, CH)
    assert q == pytest.approx(1.0, abs=1e-6) and p < 1e-6
    assert greedy_mean_drop([0.0], 0.5, A1, S1, 1.0, 0.9, CH) == (1.0, 0.0)


def test_greedy_dense_grid_oracle():
    # scalar c = e'A'SAe = 10 with A = 1, S = 1, e = sqrt(10)
    q, p = greedy_drop([math.sqrt(10)], 0.5, [[1.0]], [[1.0]], 1.0, 0.9, CH)
    assert abs(q - dense_argmin_q(10.0, 0.5, 1.0, 0.9, CH)) <= 2e-6
    assert p == pytest.approx(power_for(q, 0.5, CH), rel=1e-9)


@given(st.floats(1e-3, 1e3), st.floats(0.0, 2.0), st.floats(1e-3, 10.0))
def test_greedy_matches_bounded_minimizer(c, a, lam):
    q, p = greedy_drop([math.sqrt(c)], a, [[1.0]], [[1.0]], lam, 0.9, CH)
    lo = float(drop_prob(CH.p_max, a, CH))
    assert lo - 1e-12 <= q <= 1.0
    f = lambda qq: lam * (power_for(qq, a, CH) if qq < 1 else 0.0) + 0.9 * qq * c
    ref = optimize.minimize_scalar(f, bounds=(lo, 1.0), method="bounded",
                                   options={"xatol": 1e-12})
    best = min(ref.fun, f(lo), f(1.0))
    assert f(q) <= best + 1e-9 * (1 + abs(best))


@given(st.floats(-50, 1e4), st.floats(0.0, 100), st.floats(0.05, 5.0), st.floats(0.1, 5.0))
def test_amplitude_backends_agree_and_optimal(K, lam, s, x_max):
    x = opt_amplitude(K, lam, s, x_max)
    y = float(opt_amplitude_np(np.array([K]), lam, np.array([s]), np.array([x_max]))[0])
    assert x == pytest.approx(y, rel=1e-12, abs=1e-14)
    h = lambda t: lam * s * t * t + K * math.erfc(t / math.sqrt(2))
    grid = np.linspace(0, x_max, 2001)
    assert h(x) <= min(h(t) for t in grid) + 1e-9 * (1 + abs(K) + lam * s * x_max**2)


def test_greedy_mean_linearity(dist):
    c_e = [math.sqrt(10) / 1.3]
    assert greedy_mean_drop(c_e, 0.5, A1, S1, 1.0, 0.9, CH) == greedy_drop(c_e, 0.5, A1, S1, 1.0, 0.9, CH)
    d = Degenerate(0.7)
    ctx = dict(e=c_e, A=A1, Sigma_next=S1, ch=CH, lam=1.0, gamma=0.9)
    assert (policy_decide(GreedyMean(), {**ctx, "a_mean": d.mean()})
            == policy_decide(GreedyKnown(), {**ctx, "a": 0.7}))


def test_surrogate_objective_only_sees_the_mean():
    c, lam, g = 5.0, 1.0, 0.9
    # the default cap drops 1e-9 of mass and shifts the mean by ~2e-9; a wide cap keeps it exact
    fam = [Uniform(0, 1), PoissonTruncated(0.5, cap=25), TruncatedNormal(0.5, 1 / 12, 0, 1)]
    vals = []
    for d in fam:
        q, p = greedy_mean_drop([math.sqrt(c)], d.mean(), [[1.0]], [[1.0]], lam, g, CH)
        vals.append(lam * d.expect(lambda a: power_for(q, a, CH)) + g * q * c)
    assert max(vals) - min(vals) <= 1e-10 * (1 + abs(vals[0]))


def test_policy_decide_dispatch():
    ctx = dict(e=[0.2], A=A1, Sigma_next=S1, ch=CH, lam=1.0, gamma=0.9, a=0.4)
    assert policy_decide(ConstantPower(3.0), ctx)[1] == 3.0
    assert policy_decide(GreedyKnown(), {**ctx, "e": [0.0]}) == (1.0, 0.0)
    q, p = policy_decide(OptimalConstant(), {**ctx, "q_target": 0.2})
    assert q == pytest.approx(0.2, rel=1e-10)
    with pytest.raises(UsageError):
        policy_decide(GreedyMean(), {**ctx, "a_mean": 0.5})
    with pytest.raises(UsageError):
        policy_decide(GridDPInfinite(), ctx)
    with pytest.raises(UsageError):
        policy_decide(ConstantPower(4.0), ctx)


def test_golden_section_oracle():
    f = lambda x: (x - 0.3) ** 2 + 0.1 * math.sin(7 * x)
    x, fx = golden_section(f, 0.0, 2.0, tol=1e-10)
    ref = optimize.minimize_scalar(f, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
    assert x == pytest.approx(ref.x, abs=1e-7)


def test_optimal_constant_dense_grid(model, ch, dist):
    opt = optimal_constant(model, ch, dist, 1.0)
    Sigma = model.gains().Sigma
    f = lambda q: _constant_objective(q, model, Sigma, 1.0, dist.mean(), ch)
    lo, hi = constant_drop_range(model, ch, dist)
    coarse = np.linspace(lo, hi, 4001)
    j = int(np.argmin([f(q) for q in coarse]))
    fine = np.arange(coarse[max(j - 1, 0)], coarse[min(j + 1, 4000)], 1e-6)
    q_ref = fine[np.argmin([f(q) for q in fine])]
    assert abs(opt.q - q_ref) <= 1e-5
    assert opt.bound >= opt.reduced_bound
    assert opt.p == pytest.approx(power_for(opt.q, 0.5, ch), rel=1e-12)


def test_optimal_constant_trivial(model, ch, dist):
    z = model.with_(W=np.zeros((2, 2)), X0=np.zeros((2, 2)))
    opt = optimal_constant(z, ch, dist, 1.0)
    assert (opt.q, opt.p, opt.bound) == (1.0, 0.0, 0.0)
    lam0 = optimal_constant(model, ch, dist, 1e-12)
    assert lam0.q == pytest.approx(constant_drop_range(model, ch, dist)[0], abs=1e-6)
    with pytest.raises(InfeasibleError):
        optimal_constant(model, ChannelModel(3.0, 1.0, 0.0), dist, 1.0)


def test_scheduler_dict_roundtrip():
    for s in (GreedyKnown(), GreedyMean(), ConstantPower(1.5), OptimalConstant(),
              GridDPFinite(GridSpec(n_e=41)), GridDPInfinite(GridSpec(e_max=2.0), tol=1e-7)):
        assert scheduler_from_dict(scheduler_to_dict(s)) == s
    assert set(SCHEDULER_KINDS) == {"greedy_known", "greedy_mean", "constant",
                                    "optimal_constant", "dp_finite", "dp_infinite"}
    with pytest.raises(DomainError):
        scheduler_from_dict({"kind": "nope"})
    with pytest.raises(DomainError):
        GridSpec(n_e=40)
