"""Dense small-matrix numerics for the LQG part of the co-design.

Backward and stationary discounted Riccati recursions, the discounted
Lyapunov equation ``s A^T Theta A + Sigma = Theta`` and a few helpers.
Matrices are plain 2-D ``numpy`` arrays; everything here is pure.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, InfeasibleError, NumericError

PSD_TOL = 1e-9


def as_matrix(M, name="matrix"):
    """Coerce scalars/vectors/nested lists into a finite 2-D float array."""
    arr = np.atleast_2d(np.asarray(M, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} has non-finite entries")
    return arr


def symmetrize(M):
    return 0.5 * (M + M.T)


def is_psd(M, tol=PSD_TOL):
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        return False
    lam = np.linalg.eigvalsh(symmetrize(M))
    return bool(lam.min() >= -tol * (1.0 + abs(np.trace(M))))


def spectral_radius(M):
    """Largest eigenvalue modulus of a square matrix."""
    M = as_matrix(M)
    n, m = M.shape
    if n != m:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    if n == 1:
        return abs(float(M[0, 0]))
    if n == 2:
        # closed form from the characteristic polynomial
        tr = M[0, 0] + M[1, 1]
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        disc = 0.25 * tr * tr - det
        if disc >= 0.0:
            r = np.sqrt(disc)
            return float(max(abs(0.5 * tr + r), abs(0.5 * tr - r)))
        return float(np.sqrt(max(det, 0.0)))
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def controllability_rank(A, B, tol=None):
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks), tol=tol))


@dataclass(frozen=True)
class GainSchedule:
    """Riccati solutions, feedback gains and error weights.

    Finite schedules hold ``P`` with shape (T+1, n, n), ``L`` (T, m, n) and
    ``Sigma`` (T+1, n, n) where ``Sigma[T]`` is zero: the error at the final
    time carries no weight in the reduced cost.  Stationary schedules hold
    one matrix each and ``T is None``.
    """

    P: np.ndarray
    L: np.ndarray
    Sigma: np.ndarray
    T: int | None = None

    @property
    def stationary(self):
        return self.T is None

    def gain(self, k):
        return self.L if self.stationary else self.L[k]

    def sigma(self, k):
        return self.Sigma if self.stationary else self.Sigma[k]

    def expand(self, T):
        """(L_seq, Sigma_seq) arrays of length T and T+1 for the kernels."""
        if self.stationary:
            L = np.broadcast_to(self.L, (T,) + self.L.shape).copy()
            S = np.broadcast_to(self.Sigma, (T + 1,) + self.Sigma.shape).copy()
            return L, S
        if T != self.T:
            raise DimensionError(f"schedule horizon {self.T} != requested {T}")
        return self.L.copy(), self.Sigma.copy()


def _riccati_step(A, B, Q, R, gamma, P_next):
    """One backward step; returns (P, L, Lambda)."""
    Lam = R + gamma * B.T @ P_next @ B
    try:
        L = gamma * np.linalg.solve(Lam, B.T @ P_next @ A)
    except np.linalg.LinAlgError as exc:
        raise NumericError("R + gamma B^T P B is singular") from exc
    # P = Q + gamma A'PA - gamma A'PB L  (equivalent to the gamma^2 form)
    P = Q + gamma * A.T @ P_next @ A - gamma * A.T @ P_next @ B @ L
    return symmetrize(P), L, Lam


def _check_lqr_inputs(A, B, Q, R):
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n):
        raise DimensionError("inconsistent A/B/Q dimensions")
    m = B.shape[1]
    if R.shape != (m, m):
        raise DimensionError(f"R must be {m}x{m}, got {R.shape}")


def riccati_backward(A, B, Q, R, Q_N, gamma, T):
    """Finite-horizon discounted Riccati recursion from ``P_T = Q_N``."""
    A, B, Q, R, Q_N = (as_matrix(M) for M in (A, B, Q, R, Q_N))
    _check_lqr_inputs(A, B, Q, R)
    if T < 1:
        raise ValueError("horizon T must be >= 1")
    n, m = B.shape
    P = np.empty((T + 1, n, n))
    L = np.empty((T, m, n))
    Sigma = np.zeros((T + 1, n, n))
    P[T] = Q_N
    for k in range(T - 1, -1, -1):
        P[k], L[k], Lam = _riccati_step(A, B, Q, R, gamma, P[k + 1])
        Sigma[k] = symmetrize(L[k].T @ Lam @ L[k])
    return GainSchedule(P=P, L=L, Sigma=Sigma, T=T)


def riccati_stationary(A, B, Q, R, gamma, tol=1e-10, max_iter=100_000, P0=None):
    """Stationary discounted ARE by fixed-point iteration of the backward map.

    Returns a stationary :class:`GainSchedule`.  Raises
    :class:`ConvergenceError` if the max-abs residual stays above ``tol``.
    """
    A, B, Q, R = (as_matrix(M) for M in (A, B, Q, R))
    _check_lqr_inputs(A, B, Q, R)
    P = Q.copy() if P0 is None else as_matrix(P0)
    resid = np.inf
    for it in range(1, max_iter + 1):
        P_new, L, Lam = _riccati_step(A, B, Q, R, gamma, P)
        resid = float(np.max(np.abs(P_new - P)))
        P = P_new
        if resid <= tol:
            break
    else:
        raise ConvergenceError("stationary Riccati iteration did not converge", resid, max_iter)
    _, L, Lam = _riccati_step(A, B, Q, R, gamma, P)
    Sigma = symmetrize(L.T @ Lam @ L)
    return GainSchedule(P=P, L=L, Sigma=Sigma, T=None)


def riccati_residual(A, B, Q, R, gamma, P):
    """max |P - RHS(P)| for the stationary discounted ARE."""
    A, B, Q, R, P = (as_matrix(M) for M in (A, B, Q, R, P))
    Lam = R + gamma * B.T @ P @ B
    rhs = (Q + gamma * A.T @ P @ A
           - gamma**2 * A.T @ P @ B @ np.linalg.solve(Lam, B.T @ P @ A))
    return float(np.max(np.abs(P - rhs)))


def dlyap_discounted(A, Sigma, s, margin=1e-9):
    """Solve ``s A^T Theta A + Sigma = Theta`` via its Kronecker form.

    Raises :class:`InfeasibleError` when ``s rho(A)^2 >= 1 - margin`` (the
    defining series diverges).
    """
    A, Sigma = as_matrix(A, "A"), as_matrix(Sigma, "Sigma")
    n = A.shape[0]
    if A.shape != (n, n) or Sigma.shape != (n, n):
        raise DimensionError("A and Sigma must be square of equal size")
    if s < 0:
        raise InfeasibleError(f"discount-drop product must be nonnegative, got {s}")
    growth = s * spectral_radius(A) ** 2
    if growth >= 1.0 - margin:
        raise InfeasibleError(
            f"Lyapunov series diverges: s*rho(A)^2 = {growth:.6g} >= 1")
    if s == 0.0:
        return Sigma.copy()
    At = A.T
    K = np.eye(n * n) - s * np.kron(At, At)
    theta = np.linalg.solve(K, Sigma.reshape(-1)).reshape(n, n)
    return symmetrize(theta)
