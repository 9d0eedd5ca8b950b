"""Hot loops: per-step power decisions, batched closed-loop trials, Bellman sweeps.

Each kernel has a numba implementation (loops, ``prange`` over trials) and a
vectorized numpy implementation; :func:`simulate_batch` and
:func:`bellman_sweep` dispatch on ``POWERSCHED_BACKEND``.  Both paths consume
the same pre-drawn random arrays, so they agree to rounding.

Power decision.  Write ``x = Q_f^{-1}(q/2)`` so that ``q = erfc(x / sqrt 2)`` and
``p = s x^2`` with ``s = (a + sigma2) / alpha``.  Every scheduler here
minimizes ``h(x) = lam s x^2 + K erfc(x / sqrt 2)`` over ``0 <= x <= sqrt(p_max / s)``
with ``K`` the drop-dependent weight.  ``h'(x) = 2 lam s x - 2 K phi(x)`` has a
single sign change, at the root of ``x^2 exp(x^2) = (K / (lam s sqrt(2 pi)))^2``,
so the constrained minimizer is that root clipped to the bound.
"""

import math

import numpy as np
from scipy import special

from ._backend import apply_thread_limit, njit, prange, requested_backend

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = math.log(SQRT_2PI)

KIND_CONSTANT = 0
KIND_GREEDY = 1
KIND_GREEDY_MEAN = 2
KIND_CONST_DROP = 3

METRICS = ("reduced_cost", "lqg_cost", "mse_avg", "power_avg", "success_rate",
           "error_cost", "drop_weighted_cost")
N_METRICS = len(METRICS)


# --------------------------------------------------------------------------
# scalar decision rule


@njit(cache=True)
def _log_root(L):
    """Solve ``exp(t) + t = L`` for ``t`` (Newton; the map is convex increasing)."""
    if L > 1.0:
        t = math.log(L - math.log(L))
    else:
        t = L
    for _ in range(100):
        et = math.exp(t)
        step = (et + t - L) / (et + 1.0)
        t -= step
        if abs(step) <= 1e-15 * (1.0 + abs(t)):
            break
    return t


@njit(cache=True)
def opt_amplitude(K, lam, s, x_max):
    """Minimizer of ``lam s x^2 + K erfc(x/sqrt2)`` on ``[0, x_max]``."""
    if x_max <= 0.0 or K <= 0.0:
        return 0.0
    if lam <= 0.0:
        return x_max
    # logs term by term: the ratio overflows for tiny lam
    t = _log_root(2.0 * (math.log(K) - math.log(lam) - math.log(s) - LOG_SQRT_2PI))
    x = math.exp(0.5 * t)
    return x if x < x_max else x_max


def opt_amplitude_np(K, lam, s, x_max):
    """Vectorized :func:`opt_amplitude`."""
    K, s, x_max = np.broadcast_arrays(np.asarray(K, float), np.asarray(s, float),
                                      np.asarray(x_max, float))
    out = np.zeros(K.shape)
    active = (K > 0.0) & (x_max > 0.0)
    if lam <= 0.0:
        out[active] = x_max[active]
        return out
    if not active.any():
        return out
    L = 2.0 * (np.log(K[active]) - math.log(lam) - np.log(s[active]) - LOG_SQRT_2PI)
    big = L > 1.0
    t = np.where(big, np.log(np.where(big, L - np.log(np.where(big, L, 2.0)), 1.0)), L)
    for _ in range(100):
        et = np.exp(t)
        step = (et + t - L) / (et + 1.0)
        t = t - step
        if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(t))):
            break
    out[active] = np.minimum(np.exp(0.5 * t), x_max[active])
    return out


@njit(cache=True)
def _interp_uniform(xq, x0, h, ys):
    n = ys.shape[0]
    if n == 1:
        return ys[0]
    pos = (xq - x0) / h
    if pos <= 0.0:
        return ys[0]
    if pos >= n - 1:
        return ys[n - 1]
    i = int(pos)
    if i >= n - 1:
        i = n - 2
    f = pos - i
    return ys[i] * (1.0 - f) + ys[i + 1] * f


# --------------------------------------------------------------------------
# closed-loop trial batches


@njit(cache=True)
def _trial(i, A, B, L_seq, S_seq, Q, R, QN, gamma, lam, alpha, sigma2, pmax,
           kind, cpar, iota, e0, eh, x0, xbar0, w, a, u, record,
           tr_x, tr_xhat, tr_u, tr_a, tr_p, tr_q, tr_d, out):
    n = A.shape[0]
    m = B.shape[1]
    T = L_seq.shape[0]
    n_iota_rows = iota.shape[0]
    x = x0[i].copy()
    xhat = xbar0.copy()
    e = np.empty(n)
    Ae = np.empty(n)
    uk = np.empty(m)
    xn = np.empty(n)
    xhn = np.empty(n)
    reduced = 0.0
    lqg = 0.0
    mse = 0.0
    power = 0.0
    succ = 0.0
    err_cost = 0.0
    drop_cost = 0.0
    disc = 1.0
    for k in range(T):
        for r in range(n):
            e[r] = x[r] - xhat[r]
        for r in range(n):
            acc = 0.0
            for j in range(n):
                acc += A[r, j] * e[j]
            Ae[r] = acc
        c = 0.0
        es = 0.0
        for r in range(n):
            for j in range(n):
                c += Ae[r] * S_seq[k + 1, r, j] * Ae[j]
                es += e[r] * S_seq[k, r, j] * e[j]
        ak = a[i, k]
        s_true = (ak + sigma2) / alpha
        if kind == KIND_CONSTANT:
            p = cpar[0]
        elif kind == KIND_CONST_DROP:
            p = cpar[0] * s_true
        else:
            if kind == KIND_GREEDY_MEAN:
                s_dec = (cpar[0] + sigma2) / alpha
            else:
                s_dec = s_true
            Kc = gamma * c
            if n_iota_rows > 0:
                row = k if k < n_iota_rows else n_iota_rows - 1
                Kc += _interp_uniform(e[0], e0, eh, iota[row])
            xa = opt_amplitude(Kc, lam, s_dec, math.sqrt(pmax / s_dec))
            p = s_dec * xa * xa
        if p > pmax:
            p = pmax
        if p < 0.0:
            p = 0.0
        q = math.erfc(math.sqrt(p / s_true) / SQRT2)
        delta = 1 if u[i, k] >= q else 0
        for r in range(m):
            acc = 0.0
            for j in range(n):
                acc -= L_seq[k, r, j] * xhat[j]
            uk[r] = acc
        xqx = 0.0
        for r in range(n):
            for j in range(n):
                xqx += x[r] * Q[r, j] * x[j]
        uru = 0.0
        for r in range(m):
            for j in range(m):
                uru += uk[r] * R[r, j] * uk[j]
        reduced += disc * (es + lam * p)
        lqg += disc * (xqx + uru)
        err_cost += disc * es
        drop_cost += disc * gamma * q * c
        mse += c
        power += p
        succ += delta
        if record:
            for r in range(n):
                tr_x[i, k, r] = x[r]
                tr_xhat[i, k, r] = xhat[r]
            for r in range(m):
                tr_u[i, k, r] = uk[r]
            tr_a[i, k] = ak
            tr_p[i, k] = p
            tr_q[i, k] = q
            tr_d[i, k] = delta
        for r in range(n):
            acc = w[i, k, r]
            acch = 0.0
            for j in range(n):
                acc += A[r, j] * x[j]
                if delta == 1:
                    acch += A[r, j] * x[j]
                else:
                    acch += A[r, j] * xhat[j]
            for j in range(m):
                acc += B[r, j] * uk[j]
                acch += B[r, j] * uk[j]
            xn[r] = acc
            xhn[r] = acch
        for r in range(n):
            x[r] = xn[r]
            xhat[r] = xhn[r]
        disc *= gamma
    xqx = 0.0
    for r in range(n):
        for j in range(n):
            xqx += x[r] * QN[r, j] * x[j]
    lqg += disc * xqx
    if record:
        for r in range(n):
            tr_x[i, T, r] = x[r]
            tr_xhat[i, T, r] = xhat[r]
        for r in range(m):
            tr_u[i, T, r] = np.nan
        tr_a[i, T] = np.nan
        tr_p[i, T] = np.nan
        tr_q[i, T] = np.nan
        tr_d[i, T] = np.nan
    out[i, 0] = reduced
    out[i, 1] = lqg
    out[i, 2] = mse / T
    out[i, 3] = power / T
    out[i, 4] = succ / T
    out[i, 5] = err_cost
    out[i, 6] = drop_cost


@njit(cache=True, parallel=True)
def _simulate_numba(A, B, L_seq, S_seq, Q, R, QN, gamma, lam, alpha, sigma2, pmax,
                    kind, cpar, iota, e0, eh, x0, xbar0, w, a, u, record,
                    tr_x, tr_xhat, tr_u, tr_a, tr_p, tr_q, tr_d, out):
    N = x0.shape[0]
    for i in prange(N):
        _trial(i, A, B, L_seq, S_seq, Q, R, QN, gamma, lam, alpha, sigma2, pmax,
               kind, cpar, iota, e0, eh, x0, xbar0, w, a, u, record,
               tr_x, tr_xhat, tr_u, tr_a, tr_p, tr_q, tr_d, out)


def _simulate_numpy(A, B, L_seq, S_seq, Q, R, QN, gamma, lam, alpha, sigma2, pmax,
                    kind, cpar, iota, e0, eh, x0, xbar0, w, a, u, record,
                    tr_x, tr_xhat, tr_u, tr_a, tr_p, tr_q, tr_d, out):
    N, n = x0.shape
    T = L_seq.shape[0]
    X = x0.copy()
    Xh = np.broadcast_to(xbar0, (N, n)).copy()
    acc = np.zeros((N, N_METRICS))
    disc = 1.0
    egrid = e0 + eh * np.arange(iota.shape[1]) if iota.shape[0] > 0 else None
    for k in range(T):
        E = X - Xh
        AE = E @ A.T
        c = np.einsum("ij,jk,ik->i", AE, S_seq[k + 1], AE)
        es = np.einsum("ij,jk,ik->i", E, S_seq[k], E)
        ak = a[:, k]
        s_true = (ak + sigma2) / alpha
        if kind == KIND_CONSTANT:
            p = np.full(N, cpar[0])
        elif kind == KIND_CONST_DROP:
            p = cpar[0] * s_true
        else:
            s_dec = np.full(N, (cpar[0] + sigma2) / alpha) if kind == KIND_GREEDY_MEAN else s_true
            Kc = gamma * c
            if egrid is not None:
                row = min(k, iota.shape[0] - 1)
                Kc = Kc + np.interp(E[:, 0], egrid, iota[row])
            xa = opt_amplitude_np(Kc, lam, s_dec, np.sqrt(pmax / s_dec))
            p = s_dec * xa * xa
        p = np.clip(p, 0.0, pmax)
        q = special.erfc(np.sqrt(p / s_true) / SQRT2)
        delta = (u[:, k] >= q).astype(np.int64)
        U = -Xh @ L_seq[k].T
        xqx = np.einsum("ij,jk,ik->i", X, Q, X)
        uru = np.einsum("ij,jk,ik->i", U, R, U)
        acc[:, 0] += disc * (es + lam * p)
        acc[:, 1] += disc * (xqx + uru)
        acc[:, 2] += c
        acc[:, 3] += p
        acc[:, 4] += delta
        acc[:, 5] += disc * es
        acc[:, 6] += disc * gamma * q * c
        if record:
            tr_x[:, k] = X
            tr_xhat[:, k] = Xh
            tr_u[:, k] = U
            tr_a[:, k] = ak
            tr_p[:, k] = p
            tr_q[:, k] = q
            tr_d[:, k] = delta
        BU = U @ B.T
        Xn = X @ A.T + BU + w[:, k]
        src = np.where(delta[:, None] == 1, X, Xh)
        Xh = src @ A.T + BU
        X = Xn
        disc *= gamma
    acc[:, 1] += disc * np.einsum("ij,jk,ik->i", X, QN, X)
    if record:
        tr_x[:, T] = X
        tr_xhat[:, T] = Xh
        tr_u[:, T] = np.nan
        for arr in (tr_a, tr_p, tr_q, tr_d):
            arr[:, T] = np.nan
    out[:, 0] = acc[:, 0]
    out[:, 1] = acc[:, 1]
    out[:, 2] = acc[:, 2] / T
    out[:, 3] = acc[:, 3] / T
    out[:, 4] = acc[:, 4] / T
    out[:, 5] = acc[:, 5]
    out[:, 6] = acc[:, 6]


def simulate_batch(params, noise, record=False, backend=None):
    """Run a batch of trials.

    ``params`` is a dict of kernel inputs (see :func:`sim.kernel_params`);
    ``noise`` holds ``x0`` (N, n), ``w`` (N, T, n), ``a`` (N, T), ``u`` (N, T).
    Returns ``(metrics (N, N_METRICS), traces or None)``.
    """
    backend = backend or requested_backend()
    x0, w, a, u = noise["x0"], noise["w"], noise["a"], noise["u"]
    N, n = x0.shape
    T = params["L_seq"].shape[0]
    m = params["B"].shape[1]
    if record:
        tr = {"x": np.empty((N, T + 1, n)), "xhat": np.empty((N, T + 1, n)),
              "u": np.empty((N, T + 1, m)), "a": np.empty((N, T + 1)),
              "p": np.empty((N, T + 1)), "q": np.empty((N, T + 1)),
              "delta": np.empty((N, T + 1))}
    else:
        tr = {"x": np.empty((0, 0, 0)), "xhat": np.empty((0, 0, 0)), "u": np.empty((0, 0, 0)),
              "a": np.empty((0, 0)), "p": np.empty((0, 0)), "q": np.empty((0, 0)),
              "delta": np.empty((0, 0))}
    out = np.empty((N, N_METRICS))
    args = (params["A"], params["B"], params["L_seq"], params["S_seq"], params["Q"],
            params["R"], params["QN"], float(params["gamma"]), float(params["lam"]),
            float(params["alpha"]), float(params["sigma2"]), float(params["pmax"]),
            int(params["kind"]), params["cpar"], params["iota"], float(params["e0"]),
            float(params["eh"]), x0, params["xbar0"], w, a, u, bool(record),
            tr["x"], tr["xhat"], tr["u"], tr["a"], tr["p"], tr["q"], tr["delta"], out)
    if backend == "numba":
        apply_thread_limit()
        _simulate_numba(*args)
    else:
        _simulate_numpy(*args)
    return out, (tr if record else None)


# --------------------------------------------------------------------------
# scalar Bellman sweep


@njit(cache=True)
def _bellman_numba(Vbar, e0, eh, A, c, wn, wq, a_nodes, lam, gamma, alpha, sigma2, pmax,
                   V_out, q_out, iota_out):
    n_e = Vbar.shape[0]
    vs = 0.0
    for j in range(wn.shape[0]):
        vs += wq[j] * _interp_uniform(wn[j], e0, eh, Vbar)
    for i in range(n_e):
        e = e0 + eh * i
        vd = 0.0
        for j in range(wn.shape[0]):
            vd += wq[j] * _interp_uniform(A * e + wn[j], e0, eh, Vbar)
        gap = gamma * (vd - vs)
        iota_out[i] = gap
        Kc = gamma * c[i] + gap
        for r in range(a_nodes.shape[0]):
            s = (a_nodes[r] + sigma2) / alpha
            xa = opt_amplitude(Kc, lam, s, math.sqrt(pmax / s))
            q = math.erfc(xa / SQRT2)
            V_out[i, r] = lam * s * xa * xa + q * Kc + gamma * vs
            q_out[i, r] = q


def _bellman_numpy(Vbar, e0, eh, A, c, wn, wq, a_nodes, lam, gamma, alpha, sigma2, pmax,
                   V_out, q_out, iota_out):
    n_e = Vbar.shape[0]
    egrid = e0 + eh * np.arange(n_e)
    if n_e == 1:
        vs = float(np.dot(wq, np.full(wn.shape, Vbar[0])))
        vd = np.full(1, vs)
    else:
        vs = float(np.dot(wq, np.interp(wn, egrid, Vbar)))
        vd = np.interp(A * egrid[:, None] + wn[None, :], egrid, Vbar) @ wq
    gap = gamma * (vd - vs)
    iota_out[:] = gap
    Kc = (gamma * c + gap)[:, None]
    s = ((a_nodes + sigma2) / alpha)[None, :]
    xa = opt_amplitude_np(np.broadcast_to(Kc, (n_e, s.shape[1])), lam,
                          np.broadcast_to(s, (n_e, s.shape[1])),
                          np.broadcast_to(np.sqrt(pmax / s), (n_e, s.shape[1])))
    q = special.erfc(xa / SQRT2)
    V_out[:] = lam * s * xa * xa + q * Kc + gamma * vs
    q_out[:] = q


def bellman_sweep(Vbar, egrid, A, c, wn, wq, a_nodes, lam, gamma, alpha, sigma2, pmax,
                  backend=None):
    """Apply the scalar Bellman operator once.

    ``Vbar`` is the attack-averaged continuation value on the uniform grid
    ``egrid``; ``c`` holds ``(A e)^2 Sigma_next`` per node.  Returns
    ``(V, q_star, iota)`` with ``V``/``q_star`` of shape (n_e, n_a) and
    ``iota = gamma (E[V | drop] - E[V | success])`` of shape (n_e,).
    """
    backend = backend or requested_backend()
    n_e = egrid.shape[0]
    eh = float(egrid[1] - egrid[0]) if n_e > 1 else 1.0
    V = np.empty((n_e, a_nodes.shape[0]))
    q = np.empty_like(V)
    iota = np.empty(n_e)
    args = (np.ascontiguousarray(Vbar, dtype=float), float(egrid[0]), eh, float(A),
            np.ascontiguousarray(c, dtype=float), np.ascontiguousarray(wn, dtype=float),
            np.ascontiguousarray(wq, dtype=float), np.ascontiguousarray(a_nodes, dtype=float),
            float(lam), float(gamma), float(alpha), float(sigma2), float(pmax), V, q, iota)
    if backend == "numba":
        _bellman_numba(*args)
    else:
        _bellman_numpy(*args)
    return V, q, iota
