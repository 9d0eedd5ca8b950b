"""Plant, one-step-delayed remote estimator and certainty-equivalence law.

The sensor packet sent at time ``k`` carries ``x_k`` and arrives at ``k+1``
when ``delta_k = 1``.  The remote estimate therefore evolves as

    xhat_{k+1} = A x_k + B u_k        if delta_k = 1
               = A xhat_k + B u_k     otherwise

so the estimation error obeys ``e_{k+1} = delta_k w_k + (1 - delta_k)(A e_k + w_k)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, DomainError
from .linalg import as_matrix, is_psd, riccati_backward, riccati_stationary


@dataclass(frozen=True)
class SystemModel:
    """Linear plant, LQG weights, noise statistics and discount factor."""

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Q_N: np.ndarray
    xbar0: np.ndarray
    X0: np.ndarray
    gamma: float

    def __post_init__(self):
        for name in ("A", "B", "W", "Q", "R", "Q_N", "X0"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        xbar0 = np.asarray(self.xbar0, dtype=float).reshape(-1)
        object.__setattr__(self, "xbar0", xbar0)
        n, m = self.n, self.m
        shapes = {"A": (n, n), "B": (n, m), "W": (n, n), "Q": (n, n),
                  "R": (m, m), "Q_N": (n, n), "X0": (n, n)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} must be {shape}, got {getattr(self, name).shape}")
        if xbar0.shape != (n,):
            raise DimensionError(f"xbar0 must have length {n}")
        for name in ("W", "Q", "Q_N", "X0"):
            if not is_psd(getattr(self, name)):
                raise DomainError(f"{name} must be positive semi-definite")
        if np.linalg.eigvalsh(0.5 * (self.R + self.R.T)).min() <= 0:
            raise DomainError("R must be positive definite")
        if not 0 < self.gamma <= 1:
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1] if self.B.ndim == 2 else 1

    @property
    def scalar(self):
        return self.n == 1

    def with_(self, **changes):
        return replace(self, **changes)

    def gains(self, mode="stationary", T=None, tol=1e-10):
        """Gain schedule: ``"stationary"`` ARE or ``"finite"`` backward pass."""
        if mode == "stationary":
            return riccati_stationary(self.A, self.B, self.Q, self.R, self.gamma, tol=tol)
        if mode in ("finite", "finite-backward"):
            if T is None:
                raise ValueError("finite gain schedule needs a horizon")
            return riccati_backward(self.A, self.B, self.Q, self.R, self.Q_N, self.gamma, T)
        raise ValueError(f"unknown gains mode {mode!r}")


@dataclass
class LoopState:
    """Per-trial closed-loop state; ``e`` is kept equal to ``x - xhat``."""

    x: np.ndarray
    xhat: np.ndarray
    u_prev: np.ndarray
    x_prev: np.ndarray
    delta_prev: int = 0
    e: np.ndarray = field(init=False)

    def __post_init__(self):
        self.e = self.x - self.xhat

    @classmethod
    def initial(cls, model, x0):
        x0 = np.asarray(x0, dtype=float)
        return cls(x=x0, xhat=model.xbar0.copy(), u_prev=np.zeros(model.m),
                   x_prev=np.zeros(model.n), delta_prev=0)

    def advance(self, A, B, u, w, delta):
        """Apply ``u`` and noise ``w`` with transmission outcome ``delta``."""
        x_next = plant_step(A, B, self.x, u, w)
        self.x_prev, self.u_prev, self.delta_prev = self.x, np.asarray(u, dtype=float), int(delta)
        self.xhat = estimator_step(self, A, B)
        self.x = x_next
        self.e = self.x - self.xhat
        return self


def control_input(L, xhat):
    return -np.asarray(L) @ np.asarray(xhat)


def estimator_step(state, A, B):
    """Next remote estimate given the packet outcome stored in ``state``."""
    base = state.x_prev if state.delta_prev == 1 else state.xhat
    return A @ base + B @ state.u_prev


def plant_step(A, B, x, u, w):
    return A @ x + B @ np.atleast_1d(u) + w


def error_step(A, e, w, delta):
    if delta not in (0, 1):
        raise DomainError(f"delta must be 0 or 1, got {delta}")
    return w if delta == 1 else A @ e + w
