"""Grid dynamic programming for scalar error states.

State ``(e, a)``: ``e`` on a uniform grid over ``[-e_max, e_max]`` and ``a``
on a finite node set.  Because the next attack energy is drawn independently
of everything else, the continuation value only needs the attack-averaged
table ``Vbar(e) = sum_a P(a) V(e, a)``; the expectation over the Gaussian
innovation uses Gauss-Hermite nodes and linear interpolation (clamped at the
grid ends).

Values are kept in current-time units, ``V_k = min_q g + gamma E[V_{k+1}]``.
The minimization over ``q`` is exact: the objective is
``lam p(q, a) + q (gamma c + iota) + const`` with
``iota = gamma (E[V | drop] - E[V | success])``, the same one-dimensional
problem the greedy scheduler solves.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import expected_min_drop, check_stability_assumption
from .errors import ConvergenceError, DimensionError, InfeasibleError
from .sched import GridSpec, _decide


def gauss_hermite(n, var):
    """Nodes/weights for ``E[f(w)]`` with ``w ~ N(0, var)``."""
    t, wt = np.polynomial.hermite.hermgauss(n)
    return math.sqrt(2.0 * max(var, 0.0)) * t, wt / math.sqrt(math.pi)


def default_e_max(model, ch, dist):
    a = abs(float(model.A[0, 0]))
    qm = float(expected_min_drop(dist, ch))
    denom = 1.0 - a * math.sqrt(qm)
    if denom <= 0:
        raise InfeasibleError("error bound heuristic needs |A| sqrt(E[q_m]) < 1")
    e_max = max(10.0 * math.sqrt(float(np.trace(model.W))) / denom,
                5.0 * math.sqrt(float(model.X0[0, 0])))
    return e_max if e_max > 0 else 1.0


@dataclass
class ValueTable:
    """Solved value/policy tables on the (e-grid x attack-node) lattice.

    Finite tables: ``V`` (T+1, n_e, n_a), ``q_star`` (T, n_e, n_a), ``iota``
    (T, n_e).  Infinite tables drop the leading time axis.  ``sigma_next``
    holds the error weight used one step ahead (per ``k`` when finite).
    """

    egrid: np.ndarray
    a_nodes: np.ndarray
    a_probs: np.ndarray
    V: np.ndarray
    q_star: np.ndarray
    iota: np.ndarray
    A: float
    sigma_next: np.ndarray
    finite: bool
    log: list = field(default_factory=list)

    @property
    def horizon(self):
        return self.iota.shape[0] if self.finite else None

    def iota_rows(self):
        """``iota`` as a 2-D (rows, n_e) array for the trial kernel."""
        return self.iota if self.finite else self.iota[None, :]

    def decide(self, e, a, k, lam, gamma, ch):
        e = float(np.atleast_1d(e)[0])
        if self.finite:
            k = min(int(k), self.iota.shape[0] - 1)
            gap, sig = np.interp(e, self.egrid, self.iota[k]), self.sigma_next[k]
        else:
            gap, sig = np.interp(e, self.egrid, self.iota), float(self.sigma_next)
        c = (self.A * e) ** 2 * sig
        s = (a + ch.sigma2) / ch.alpha
        q, p = _decide(gamma * c + gap, lam, s, ch.p_max)
        # q above is at the decision's attack energy, which is the true one here
        return q, p

    def rows(self):
        """Export rows following the documented CSV headers."""
        n_e, n_a = self.egrid.shape[0], self.a_nodes.shape[0]
        if not self.finite:
            for i in range(n_e):
                for j in range(n_a):
                    yield (self.egrid[i], self.a_nodes[j], self.V[i, j], self.q_star[i, j])
            return
        T = self.iota.shape[0]
        for k in range(T + 1):
            for i in range(n_e):
                for j in range(n_a):
                    if k < T:
                        yield (k, self.egrid[i], self.a_nodes[j], self.V[k, i, j],
                               self.q_star[k, i, j], self.iota[k, i])
                    else:
                        yield (k, self.egrid[i], self.a_nodes[j], 0.0, 1.0, 0.0)

    @property
    def header(self):
        return ("k", "e", "a", "V", "q_star", "iota") if self.finite else ("e", "a", "V", "q_star")


def _setup(model, ch, dist, grid):
    if model.n != 1 or model.m != 1:
        raise DimensionError(f"grid DP supports scalar systems only (n={model.n})")
    e_max = grid.e_max if grid.e_max is not None else default_e_max(model, ch, dist)
    egrid = np.linspace(-e_max, e_max, grid.n_e)
    a_nodes, a_probs = dist.quantize(grid.n_a)
    wn, wq = gauss_hermite(grid.n_quad, float(model.W[0, 0]))
    return egrid, np.asarray(a_nodes, float), np.asarray(a_probs, float), wn, wq


def finite_dp_solve(model, ch, dist, grid, T, lam, gains_mode="finite", backend=None):
    """Backward recursion ``V_T = 0``, ``V_k = min_q g + gamma E[V_{k+1}]``.

    ``gains_mode="finite"`` takes ``Sigma_{k+1}`` from the backward Riccati
    pass (``Sigma_T = 0``); ``"stationary"`` uses the stationary weight at
    every step.
    """
    egrid, a_nodes, a_probs, wn, wq = _setup(model, ch, dist, grid)
    A = float(model.A[0, 0])
    if gains_mode == "stationary":
        sig = np.full(T + 1, float(model.gains("stationary").Sigma[0, 0]))
    else:
        sig = model.gains("finite", T=T).Sigma[:, 0, 0].copy()
    n_e, n_a = egrid.shape[0], a_nodes.shape[0]
    V = np.zeros((T + 1, n_e, n_a))
    qs = np.empty((T, n_e, n_a))
    iota = np.empty((T, n_e))
    for k in range(T - 1, -1, -1):
        c = (A * egrid) ** 2 * sig[k + 1]
        Vbar = V[k + 1] @ a_probs
        V[k], qs[k], iota[k] = kernels.bellman_sweep(
            Vbar, egrid, A, c, wn, wq, a_nodes, lam, model.gamma, ch.alpha, ch.sigma2,
            ch.p_max, backend=backend)
    return ValueTable(egrid=egrid, a_nodes=a_nodes, a_probs=a_probs, V=V, q_star=qs,
                      iota=iota, A=A, sigma_next=sig[1:], finite=True)


def infinite_dp_solve(model, ch, dist, grid, lam, tol=1e-6, max_iter=100_000, Sigma=None,
                      backend=None):
    """Value iteration from ``V_0 = 0`` until the Bellman residual is below ``tol``.

    Stops once the sup-norm update is at most ``tol (1 - gamma) / (2 gamma)``.
    The log records ``(iteration, sup |V_{n+1} - V_n|, min (V_{n+1} - V_n))``.
    """
    gamma = model.gamma
    if not 0 < gamma < 1:
        raise InfeasibleError("value iteration needs 0 < gamma < 1")
    holds, lhs, rhs = check_stability_assumption(dist, ch, model.A)
    if not holds:
        raise InfeasibleError(f"stability assumption fails: E[q_m(a)] = {lhs:.6g} >= {rhs:.6g}")
    egrid, a_nodes, a_probs, wn, wq = _setup(model, ch, dist, grid)
    A = float(model.A[0, 0])
    sig = float(model.gains("stationary").Sigma[0, 0]) if Sigma is None else float(np.asarray(Sigma).reshape(-1)[0])
    c = (A * egrid) ** 2 * sig
    stop = tol * (1 - gamma) / (2 * gamma)
    V = np.zeros((egrid.shape[0], a_nodes.shape[0]))
    log = []
    for it in range(1, max_iter + 1):
        V_new, qs, iota = kernels.bellman_sweep(
            V @ a_probs, egrid, A, c, wn, wq, a_nodes, lam, gamma, ch.alpha, ch.sigma2,
            ch.p_max, backend=backend)
        diff = V_new - V
        sup = float(np.max(np.abs(diff)))
        log.append((it, sup, float(diff.min())))
        V = V_new
        if sup <= stop:
            break
    else:
        raise ConvergenceError("value iteration hit its iteration cap", sup, max_iter)
    # policy greedy with respect to the returned V
    V_next, qs, iota = kernels.bellman_sweep(
        V @ a_probs, egrid, A, c, wn, wq, a_nodes, lam, gamma, ch.alpha, ch.sigma2, ch.p_max,
        backend=backend)
    table = ValueTable(egrid=egrid, a_nodes=a_nodes, a_probs=a_probs, V=V, q_star=qs,
                       iota=iota, A=A, sigma_next=np.asarray(sig), finite=False, log=log)
    table.residual = float(np.max(np.abs(V_next - V)))
    return table
