"""Closed-form costs, the constant-drop upper bound and experiment sweeps.

Under a stationary policy with mean drop probability ``q`` the weighted error
``E[sum_k gamma^k e_k' Sigma e_k]`` equals ``gamma tr(Theta W)/(1-gamma) + tr(Theta X0)``
where ``Theta`` solves ``gamma q A' Theta A + Sigma = Theta``.  The sweeps
here simulate the schedulers and tabulate what the closed forms predict.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import drop_prob
from .errors import InfeasibleError, UsageError
from .linalg import dlyap_discounted
from .presets import label
from .sched import ConstantPower, GreedyKnown, GreedyMean, OptimalConstant, optimal_constant
from .sim import run_monte_carlo

STAT_SIGMAS = 3.0


def _stationary(model, Sigma=None, P=None):
    if Sigma is None or P is None:
        g = model.gains("stationary")
        return g.Sigma, g.P
    return Sigma, P


def expected_drop(p, ch, dist):
    """Mean drop probability of a fixed power ``p`` over the attack law."""
    return float(dist.expect(lambda a: drop_prob(p, a, ch)))


def theoretical_cost_constant(p, model, ch, dist, lam, Sigma=None):
    """Reduced discounted cost of transmitting power ``p`` at every step."""
    Sigma, _ = _stationary(model, Sigma, P=0)
    g = model.gamma
    q_hat = expected_drop(p, ch, dist)
    Theta = dlyap_discounted(model.A, Sigma, g * q_hat)
    return float((g * np.trace(Theta @ model.W) + lam * p) / (1 - g) + np.trace(Theta @ model.X0))


@dataclass(frozen=True)
class BoundReport:
    q_tilde: float
    p_tilde: float
    Theta_tilde: np.ndarray
    upper_bound: float
    reduced_upper_bound: float
    pmax_constant_cost: float


def upper_bound_total(model, ch, dist, lam, Sigma=None, P=None):
    Sigma, P = _stationary(model, Sigma, P)
    opt = optimal_constant(model, ch, dist, lam, Sigma=Sigma, P=P)
    try:
        pmax_cost = theoretical_cost_constant(ch.p_max, model, ch, dist, lam, Sigma)
    except InfeasibleError:
        pmax_cost = math.inf
    return BoundReport(q_tilde=opt.q, p_tilde=opt.p, Theta_tilde=opt.Theta,
                       upper_bound=opt.bound, reduced_upper_bound=opt.reduced_bound,
                       pmax_constant_cost=pmax_cost)


# --------------------------------------------------------------------------
# sweeps


def _avg_power(template, lam, trials):
    rep = run_monte_carlo(template.replace(lam=lam, trials=trials))
    return rep.mean["power_avg"]


def lambda_range_for_power(template, lo_power, hi_power, pilot_trials=1000, iters=14):
    """Bracket ``[lam_lo, lam_hi]`` whose greedy average powers span ``[lo_power, hi_power]``.

    Average power decreases in ``lam``; each end is found by bisection in
    ``log lam`` on a pilot Monte Carlo run.
    """
    trials = min(pilot_trials, template.trials)

    def solve(target):
        a, b = -8.0, 4.0  # log10 bracket
        pa = _avg_power(template, 10**a, trials)
        pb = _avg_power(template, 10**b, trials)
        if not (pa >= target >= pb):
            return 10 ** (a if target > pa else b)
        for _ in range(iters):
            mid = 0.5 * (a + b)
            if _avg_power(template, 10**mid, trials) >= target:
                a = mid
            else:
                b = mid
        return 10 ** (0.5 * (a + b))

    lam_small = solve(hi_power)
    lam_big = solve(lo_power)
    # widen slightly so the pilot's noise cannot leave the ends uncovered
    return lam_small / 1.5, lam_big * 1.5


def sweep_power_tradeoff(powers, template, greedy=("greedy_known", "greedy_mean"),
                         power_range=(0.4, 1.8), n_lambda=16, pilot_trials=1000):
    """Rows ``(scheduler, param, avg_power, avg_power_stderr, mse, mse_stderr)``.

    Constant-power rows use each entry of ``powers``; greedy rows use a
    log-spaced ``lam`` grid ranged so average power covers ``power_range``.
    """
    rows = []
    for p in powers:
        if not 0 <= p <= template.ch.p_max:
            raise UsageError(f"power {p} outside [0, {template.ch.p_max}]")
        rep = run_monte_carlo(template.replace(sched=ConstantPower(float(p))))
        rows.append(_tradeoff_row("constant", p, rep))
    if greedy:
        lam_lo, lam_hi = lambda_range_for_power(template.replace(sched=GreedyKnown()),
                                                power_range[0], power_range[1], pilot_trials)
        lams = np.geomspace(lam_lo, lam_hi, n_lambda)
        for name in greedy:
            sched = GreedyKnown() if name == "greedy_known" else GreedyMean()
            for lam in lams:
                rep = run_monte_carlo(template.replace(sched=sched, lam=float(lam)))
                rows.append(_tradeoff_row(name, float(lam), rep))
    return rows


def _tradeoff_row(name, param, rep):
    return {"scheduler": name, "param": float(param),
            "avg_power": rep.mean["power_avg"], "avg_power_stderr": rep.stderr["power_avg"],
            "mse": rep.mean["mse_avg"], "mse_stderr": rep.stderr["mse_avg"]}


def interpolate_curve(rows, scheduler, avg_power):
    """Linear interpolation of ``(mse, mse_stderr)`` at a given average power."""
    pts = sorted((r["avg_power"], r["mse"], r["mse_stderr"]) for r in rows
                 if r["scheduler"] == scheduler)
    if not pts:
        raise UsageError(f"no rows for scheduler {scheduler!r}")
    xs = np.array([p[0] for p in pts])
    if not xs[0] <= avg_power <= xs[-1]:
        raise UsageError(f"{scheduler} curve {xs[0]:.3g}..{xs[-1]:.3g} misses power {avg_power:.3g}")
    mse = float(np.interp(avg_power, xs, [p[1] for p in pts]))
    se = float(np.interp(avg_power, xs, [p[2] for p in pts]))
    return mse, se


def sweep_lambda_costs(lambdas, template, schedulers=None):
    """Rows ``(lambda, scheduler, cost_mean, cost_stderr, theoretical)``.

    ``theoretical`` is the closed-form reduced cost for constant power, the
    reduced upper bound for the optimal constant-drop policy and NaN for the
    greedy schedulers.
    """
    if schedulers is None:
        schedulers = [GreedyKnown(), GreedyMean(), ConstantPower(template.ch.p_max),
                      OptimalConstant()]
    model, ch, dist = template.model, template.ch, template.dist
    gains = model.gains("stationary")
    rows = []
    for lam in lambdas:
        if not lam > 0:
            raise UsageError("lambda values must be positive")
        for sched in schedulers:
            rep = run_monte_carlo(template.replace(sched=sched, lam=float(lam)))
            theo = math.nan
            if isinstance(sched, ConstantPower):
                theo = theoretical_cost_constant(sched.p, model, ch, dist, lam, gains.Sigma)
            elif isinstance(sched, OptimalConstant):
                theo = upper_bound_total(model, ch, dist, lam, gains.Sigma, gains.P).reduced_upper_bound
            name = sched.kind if not isinstance(sched, ConstantPower) else f"constant({sched.p:g})"
            rows.append({"lambda": float(lam), "scheduler": name,
                         "cost_mean": rep.mean["reduced_cost"],
                         "cost_stderr": rep.stderr["reduced_cost"], "theoretical": theo})
    return rows


def compare_attack_distributions(dists, template, sched=None, mean_tol=1e-6):
    """Greedy costs per attack law sharing one mean, plus pairwise differences.

    Returns ``(rows, diffs)``; rows carry ``dist, mean_attack, cost_mean,
    cost_stderr, upper_bound`` and diffs ``(i, j, delta, combined_stderr)``.
    """
    means = [d.mean() for d in dists]
    if max(means) - min(means) > mean_tol:
        raise UsageError(f"attack distributions must share a mean, got {means}")
    sched = sched or GreedyKnown()
    model, ch = template.model, template.ch
    gains = model.gains("stationary")
    rows = []
    for d, mu in zip(dists, means):
        rep = run_monte_carlo(template.replace(dist=d, sched=sched))
        bound = upper_bound_total(model, ch, d, template.lam, gains.Sigma, gains.P)
        rows.append({"dist": label(d), "mean_attack": float(mu),
                     "cost_mean": rep.mean["reduced_cost"],
                     "cost_stderr": rep.stderr["reduced_cost"],
                     "upper_bound": bound.reduced_upper_bound})
    diffs = []
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            delta = rows[i]["cost_mean"] - rows[j]["cost_mean"]
            se = math.hypot(rows[i]["cost_stderr"], rows[j]["cost_stderr"])
            diffs.append((i, j, delta, se))
    return rows, diffs


def group_by_mean(dists, decimals=6):
    groups = {}
    for d in dists:
        groups.setdefault(round(d.mean(), decimals), []).append(d)
    return dict(sorted(groups.items()))
