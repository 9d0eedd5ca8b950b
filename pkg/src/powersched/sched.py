"""Transmission-power scheduling policies.

Greedy schedulers pick the drop probability minimizing the one-step cost

    g(e, a, q) = lam p(q, a) + gamma q e' A' Sigma_next A e,

either with the true attack energy (:func:`greedy_drop`) or with its mean
(:func:`greedy_mean_drop`).  :func:`optimal_constant` finds the best fixed
drop target and the resulting upper bound on the infinite-horizon cost.
Grid dynamic programming lives in :mod:`powersched.dp`.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import check_stability_assumption, drop_prob, min_drop, power_for, q_tail_inv
from .errors import DomainError, InfeasibleError, UsageError
from .linalg import as_matrix, dlyap_discounted, spectral_radius

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------------------
# scheduler specifications


@dataclass(frozen=True)
class GridSpec:
    """Discretization of the scalar DP state space.

    ``e_max=None`` picks the bound from the noise level and the full-power
    drop probability at solve time.
    """

    e_max: float | None = None
    n_e: int = 201
    n_a: int = 16
    n_quad: int = 16
    n_q: int = 64

    def __post_init__(self):
        if self.n_e < 33 or self.n_e % 2 == 0:
            raise DomainError(f"n_e must be odd and >= 33, got {self.n_e}")
        if self.n_quad < 8:
            raise DomainError(f"n_quad must be >= 8, got {self.n_quad}")
        if self.e_max is not None and not self.e_max > 0:
            raise DomainError("e_max must be positive")


@dataclass(frozen=True)
class GreedyKnown:
    kind = "greedy_known"


@dataclass(frozen=True)
class GreedyMean:
    kind = "greedy_mean"


@dataclass(frozen=True)
class ConstantPower:
    p: float
    kind = "constant"


@dataclass(frozen=True)
class OptimalConstant:
    kind = "optimal_constant"


@dataclass(frozen=True)
class GridDPFinite:
    grid: GridSpec = field(default_factory=GridSpec)
    kind = "dp_finite"


@dataclass(frozen=True)
class GridDPInfinite:
    grid: GridSpec = field(default_factory=GridSpec)
    tol: float = 1e-6
    kind = "dp_infinite"


SCHEDULER_KINDS = {cls.kind: cls for cls in
                   (GreedyKnown, GreedyMean, ConstantPower, OptimalConstant,
                    GridDPFinite, GridDPInfinite)}


def scheduler_from_dict(doc):
    kind = doc.get("kind")
    params = dict(doc.get("params", {}))
    if kind not in SCHEDULER_KINDS:
        raise DomainError(f"unknown scheduler kind {kind!r}")
    cls = SCHEDULER_KINDS[kind]
    if kind in ("dp_finite", "dp_infinite"):
        tol = params.pop("tol", None)
        grid = GridSpec(**params)
        return cls(grid=grid) if tol is None or kind == "dp_finite" else cls(grid=grid, tol=tol)
    try:
        return cls(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for scheduler {kind}: {exc}") from exc


def scheduler_to_dict(spec):
    if isinstance(spec, ConstantPower):
        params = {"p": spec.p}
    elif isinstance(spec, (GridDPFinite, GridDPInfinite)):
        g = spec.grid
        params = {"e_max": g.e_max, "n_e": g.n_e, "n_a": g.n_a, "n_quad": g.n_quad, "n_q": g.n_q}
        if isinstance(spec, GridDPInfinite):
            params["tol"] = spec.tol
    else:
        params = {}
    return {"kind": spec.kind, "params": params}


# --------------------------------------------------------------------------
# stage cost and greedy minimizers


def error_weight(e, A, Sigma_next):
    """``e' A' Sigma_next A e`` for a state-error vector."""
    Ae = as_matrix(A) @ np.atleast_1d(np.asarray(e, dtype=float))
    return float(Ae @ as_matrix(Sigma_next) @ Ae)


def stage_cost(e, a, q, A, Sigma_next, lam, gamma, ch):
    q_lo = float(min_drop(a, ch))
    if q < q_lo * (1 - 1e-12):
        raise InfeasibleError(f"drop probability {q:.6g} below reachable minimum {q_lo:.6g}")
    p = float(power_for(q, a, ch))
    return lam * p + gamma * q * error_weight(e, A, Sigma_next)


def _decide(weight, lam, s, p_max):
    """(q, p) minimizing ``lam s x^2 + weight q(x)`` with ``p = s x^2 <= p_max``."""
    x = kernels.opt_amplitude(float(weight), float(lam), float(s), math.sqrt(p_max / s))
    p = min(s * x * x, p_max)
    return math.erfc(x / math.sqrt(2.0)), p


def greedy_drop(e, a, A, Sigma_next, lam, gamma, ch):
    """Attack-aware greedy choice ``(q*, p*)``."""
    s = (a + ch.sigma2) / ch.alpha
    return _decide(gamma * error_weight(e, A, Sigma_next), lam, s, ch.p_max)


def greedy_mean_drop(e, a_mean, A, Sigma_next, lam, gamma, ch):
    """Mean-attack greedy choice.

    Because ``p(q, a)`` is linear in ``a``, ``E_a[p(q, a)] = p(q, a_mean)``;
    the surrogate is minimized over ``[drop_prob(p_max, a_mean), 1]`` and the
    returned power is the one computed at ``a_mean``.
    """
    return greedy_drop(e, a_mean, A, Sigma_next, lam, gamma, ch)


def golden_section(f, lo, hi, tol=1e-7, n_scan=64):
    """Minimize ``f`` on ``[lo, hi]``: coarse scan, then golden-section refinement."""
    xs = np.linspace(lo, hi, n_scan)
    fx = np.array([f(x) for x in xs])
    j = int(np.argmin(fx))
    a = xs[max(j - 1, 0)]
    b = xs[min(j + 1, n_scan - 1)]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    best = min(((f(x), x), (fx[j], xs[j])))
    return best[1], best[0]


# --------------------------------------------------------------------------
# optimal constant drop target and the cost bound


@dataclass(frozen=True)
class ConstantOptimum:
    q: float
    p: float
    Theta: np.ndarray
    objective: float
    bound: float
    reduced_bound: float


def _constant_objective(q, model, Sigma, lam, a_mean, ch):
    g = model.gamma
    Theta = dlyap_discounted(model.A, Sigma, g * q, margin=0.0)
    p = float(power_for(q, a_mean, ch)) if q < 1.0 else 0.0
    return (g * np.trace(Theta @ model.W) / (1 - g) + np.trace(Theta @ model.X0)
            + lam * p / (1 - g))


def constant_drop_range(model, ch, dist):
    """Drop targets whose mean power fits ``p_max`` and whose cost series converges."""
    rho = spectral_radius(model.A)
    lo = float(drop_prob(ch.p_max, dist.mean(), ch))
    growth = model.gamma * rho**2
    hi = 1.0 if growth == 0 else min(1.0, (1.0 - 1e-6) / growth)
    return lo, hi


def optimal_constant(model, ch, dist, lam, Sigma=None, P=None):
    """Best fixed drop target ``q~`` and the cost bound it certifies.

    Minimizes ``gamma tr(Theta W)/(1-gamma) + tr(Theta X0) + lam E[p(q,a)]/(1-gamma)``
    with ``gamma q A' Theta A + Sigma = Theta``.  ``bound`` includes the
    scheduler-independent ``gamma tr(P W)/(1-gamma)`` term; ``reduced_bound``
    omits it.
    """
    holds, lhs, rhs = check_stability_assumption(dist, ch, model.A)
    if not holds:
        raise InfeasibleError(f"stability assumption fails: E[q_m(a)] = {lhs:.6g} >= {rhs:.6g}")
    if not model.gamma < 1:
        raise InfeasibleError("the constant-drop bound needs gamma < 1")
    if Sigma is None or P is None:
        gains = model.gains("stationary")
        Sigma, P = gains.Sigma, gains.P
    a_mean = dist.mean()
    g = model.gamma
    if not (np.any(model.W) or np.any(model.X0)):
        # no error to fight: never transmit, Theta only multiplies zero traces
        return ConstantOptimum(q=1.0, p=0.0, Theta=np.zeros_like(model.A), objective=0.0,
                               bound=0.0, reduced_bound=0.0)
    lo, hi = constant_drop_range(model, ch, dist)
    if lo > hi:
        raise InfeasibleError(f"no constant drop target is feasible: [{lo:.6g}, {hi:.6g}] empty")
    f = lambda q: _constant_objective(q, model, Sigma, lam, a_mean, ch)
    q_star, obj = golden_section(f, lo, hi, tol=1e-9, n_scan=512)
    Theta = dlyap_discounted(model.A, Sigma, g * q_star, margin=0.0)
    p_star = float(power_for(q_star, a_mean, ch)) if q_star < 1.0 else 0.0
    reduced = (g * np.trace(Theta @ model.W) + lam * p_star) / (1 - g) + np.trace(Theta @ model.X0)
    total = reduced + g * np.trace(P @ model.W) / (1 - g)
    return ConstantOptimum(q=float(q_star), p=p_star, Theta=Theta, objective=float(obj),
                           bound=float(total), reduced_bound=float(reduced))


# --------------------------------------------------------------------------
# dispatch


def policy_decide(spec, ctx):
    """Evaluate a scheduler at one decision instant.

    ``ctx`` keys: ``e``, ``A``, ``Sigma_next``, ``ch``, ``lam``, ``gamma``,
    plus ``a`` (attack-aware variants) or ``a_mean`` (:class:`GreedyMean`),
    ``k`` and ``table`` for DP variants, ``q_target`` for
    :class:`OptimalConstant`.  Returns ``(q, p)`` where ``q`` is the drop
    probability at the true attack energy when it is known.
    """
    ch = ctx["ch"]
    if isinstance(spec, ConstantPower):
        if not 0 <= spec.p <= ch.p_max:
            raise UsageError(f"constant power {spec.p} outside [0, {ch.p_max}]")
        q = float(drop_prob(spec.p, ctx["a"], ch)) if "a" in ctx else math.nan
        return q, float(spec.p)
    if isinstance(spec, GreedyMean):
        if "a" in ctx:
            raise UsageError("GreedyMean must not see the realized attack energy")
        if "a_mean" not in ctx:
            raise UsageError("GreedyMean needs 'a_mean'")
        return greedy_mean_drop(ctx["e"], ctx["a_mean"], ctx["A"], ctx["Sigma_next"],
                                ctx["lam"], ctx["gamma"], ch)
    if "a" not in ctx:
        raise UsageError(f"{type(spec).__name__} needs the attack energy 'a'")
    a = ctx["a"]
    if isinstance(spec, GreedyKnown):
        return greedy_drop(ctx["e"], a, ctx["A"], ctx["Sigma_next"], ctx["lam"], ctx["gamma"], ch)
    if isinstance(spec, OptimalConstant):
        if "q_target" not in ctx:
            raise UsageError("OptimalConstant needs 'q_target'")
        x = float(q_tail_inv(ctx["q_target"] / 2.0))
        p = min(x * x * (a + ch.sigma2) / ch.alpha, ch.p_max)
        return float(drop_prob(p, a, ch)), p
    if isinstance(spec, (GridDPFinite, GridDPInfinite)):
        table = ctx.get("table")
        if table is None:
            raise UsageError("grid DP policies need a solved 'table'")
        return table.decide(ctx["e"], a, ctx.get("k", 0), ctx["lam"], ctx["gamma"], ch)
    raise UsageError(f"unsupported scheduler {spec!r}")
