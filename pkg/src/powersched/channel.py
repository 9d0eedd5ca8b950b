"""SINR packet-drop channel and DoS attack-energy distributions.

A packet sent with power ``p`` while the jammer injects energy ``a`` is lost
with probability ``q = 2 Q_f(sqrt(alpha p / (a + sigma2)))``, where ``Q_f`` is
the standard normal tail.  Inverting that relation gives the power needed to
hit a target drop probability, ``p = Q_f^{-1}(q/2)^2 (a + sigma2) / alpha``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .errors import DomainError
from .linalg import spectral_radius

SQRT2 = math.sqrt(2.0)


def q_tail(x):
    """Standard normal tail ``P(Z > x)``; accepts scalars or arrays."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / SQRT2)[()]


def q_tail_inv(y):
    """Inverse of :func:`q_tail` on ``(0, 0.5]``, returning ``x >= 0``."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0.0)) or np.any(y > 0.5):
        raise DomainError("q_tail_inv is defined on (0, 0.5]")
    # -ndtri(y) loses no precision for small y, unlike ndtri(1 - y)
    return np.maximum(-special.ndtri(y), 0.0)[()]


@dataclass(frozen=True)
class ChannelModel:
    alpha: float
    sigma2: float
    p_max: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2}")
        if not self.p_max >= 0:
            raise DomainError(f"p_max must be >= 0, got {self.p_max}")


def drop_prob(p, a, ch):
    """Drop probability for power ``p`` under attack energy ``a``."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(p < 0) or np.any(a < 0):
        raise DomainError("power and attack energy must be nonnegative")
    return special.erfc(np.sqrt(ch.alpha * p / (a + ch.sigma2)) / SQRT2)[()]


def power_for(q, a, ch, with_flag=False):
    """Power realizing drop probability ``q`` at attack energy ``a``.

    The conversion is not clamped.  With ``with_flag=True`` returns
    ``(p, feasible)`` where ``feasible`` is ``p <= p_max`` (up to rounding).
    """
    q = np.asarray(q, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(~(q > 0.0)) or np.any(q > 1.0):
        raise DomainError("drop probability must lie in (0, 1]")
    if np.any(a < 0):
        raise DomainError("attack energy must be nonnegative")
    x = q_tail_inv(q / 2.0)
    p = (x * x * (a + ch.sigma2) / ch.alpha)[()]
    if with_flag:
        feasible = (np.asarray(p) <= ch.p_max * (1 + 1e-12) + 1e-15)[()]
        return p, feasible
    return p


def min_drop(a, ch):
    """Lowest reachable drop probability ``q_m(a)`` (full power)."""
    return drop_prob(ch.p_max, a, ch)


def admissible_drop_range(a, ch):
    """Interval ``[q_m(a), 1]`` of reachable drop probabilities."""
    if np.any(np.asarray(a) < 0):
        raise DomainError("attack energy must be nonnegative")
    return float(min_drop(a, ch)), 1.0


# --------------------------------------------------------------------------
# attack-energy distributions


class AttackDistribution:
    """Base for i.i.d. attack-energy laws supported on ``[0, a_max]``."""

    kind = ""
    discrete = False

    @property
    def a_max(self):
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def mean(self):
        raise NotImplementedError

    def expect(self, f):
        """``E[f(a)]`` for a vectorized callable ``f``."""
        raise NotImplementedError

    def quantize(self, n_nodes=16):
        """Finite (nodes, probabilities) approximation preserving the mean."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(AttackDistribution):
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise DomainError(f"uniform needs 0 <= lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def a_max(self):
        return self.hi

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def expect(self, f):
        val, _ = integrate.quad(lambda a: float(f(a)), self.lo, self.hi,
                                epsabs=1e-12, epsrel=1e-10, limit=200)
        return val / (self.hi - self.lo)

    def quantize(self, n_nodes=16):
        edges = np.linspace(self.lo, self.hi, n_nodes + 1)
        return 0.5 * (edges[:-1] + edges[1:]), np.full(n_nodes, 1.0 / n_nodes)

    def to_dict(self):
        return {"kind": self.kind, "params": {"lo": self.lo, "hi": self.hi}}


def _poisson_default_cap(rate):
    return int(math.ceil(stats.poisson.ppf(1.0 - 1e-9, rate)))


@dataclass(frozen=True)
class PoissonTruncated(AttackDistribution):
    """Poisson(rate) conditioned on ``a <= cap``."""

    rate: float
    cap: int | None = None
    kind = "poisson"
    discrete = True

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError(f"poisson rate must be > 0, got {self.rate}")
        if self.cap is None:
            object.__setattr__(self, "cap", _poisson_default_cap(self.rate))
        if int(self.cap) != self.cap or self.cap < 0:
            raise DomainError(f"poisson cap must be a nonnegative integer, got {self.cap}")
        object.__setattr__(self, "cap", int(self.cap))

    @property
    def a_max(self):
        return float(self.cap)

    def pmf(self):
        k = np.arange(self.cap + 1)
        w = stats.poisson.pmf(k, self.rate)
        return k.astype(float), w / w.sum()

    def sample(self, rng, size=None):
        out = np.asarray(rng.poisson(self.rate, size), dtype=float)
        if out.ndim == 0:
            while out > self.cap:
                out = np.asarray(rng.poisson(self.rate), dtype=float)
            return float(out)
        bad = out > self.cap
        while bad.any():
            out[bad] = rng.poisson(self.rate, int(bad.sum()))
            bad = out > self.cap
        return out

    def mean(self):
        k, w = self.pmf()
        return float(np.dot(k, w))

    def expect(self, f):
        k, w = self.pmf()
        return float(np.dot(np.asarray(f(k), dtype=float), w))

    def quantize(self, n_nodes=16):
        return self.pmf()

    def to_dict(self):
        return {"kind": self.kind, "params": {"rate": self.rate, "cap": self.cap}}


@dataclass(frozen=True)
class TruncatedNormal(AttackDistribution):
    """Normal(mu, sigma) restricted to ``[lo, hi]``."""

    mu: float
    sigma: float
    lo: float
    hi: float
    kind = "truncnorm"

    def __post_init__(self):
        if not (self.sigma > 0 and 0 <= self.lo < self.hi):
            raise DomainError("truncnorm needs sigma > 0 and 0 <= lo < hi")

    @property
    def a_max(self):
        return self.hi

    @property
    def _z(self):
        return (self.lo - self.mu) / self.sigma, (self.hi - self.mu) / self.sigma

    def cdf_bounds(self):
        za, zb = self._z
        return special.ndtr(za), special.ndtr(zb)

    def pdf(self, a):
        a = np.asarray(a, dtype=float)
        Fa, Fb = self.cdf_bounds()
        dens = np.exp(-0.5 * ((a - self.mu) / self.sigma) ** 2) / (self.sigma * math.sqrt(2 * math.pi))
        return np.where((a >= self.lo) & (a <= self.hi), dens / (Fb - Fa), 0.0)

    def ppf(self, u):
        Fa, Fb = self.cdf_bounds()
        a = self.mu + self.sigma * special.ndtri(Fa + np.asarray(u) * (Fb - Fa))
        return np.clip(a, self.lo, self.hi)

    def sample(self, rng, size=None):
        return self.ppf(rng.random(size))[()]

    def mean(self):
        za, zb = self._z
        Fa, Fb = self.cdf_bounds()
        phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        return self.mu + self.sigma * (phi(za) - phi(zb)) / (Fb - Fa)

    def expect(self, f):
        val, _ = integrate.quad(lambda a: float(f(a)) * float(self.pdf(a)), self.lo, self.hi,
                                epsabs=1e-12, epsrel=1e-10, limit=200)
        return val

    def quantize(self, n_nodes=16):
        edges = self.ppf(np.linspace(0.0, 1.0, n_nodes + 1))
        nodes = np.empty(n_nodes)
        for i in range(n_nodes):
            mass, _ = integrate.quad(lambda a: a * float(self.pdf(a)), edges[i], edges[i + 1],
                                     epsabs=1e-14, epsrel=1e-12)
            nodes[i] = mass * n_nodes
        return nodes, np.full(n_nodes, 1.0 / n_nodes)

    def to_dict(self):
        return {"kind": self.kind,
                "params": {"mu": self.mu, "sigma": self.sigma, "lo": self.lo, "hi": self.hi}}


@dataclass(frozen=True)
class Degenerate(AttackDistribution):
    value: float
    kind = "degenerate"
    discrete = True

    def __post_init__(self):
        if not self.value >= 0:
            raise DomainError(f"attack energy must be nonnegative, got {self.value}")

    @property
    def a_max(self):
        return self.value

    def sample(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    def mean(self):
        return float(self.value)

    def expect(self, f):
        return float(f(np.asarray(self.value, dtype=float)))

    def quantize(self, n_nodes=16):
        return np.array([float(self.value)]), np.array([1.0])

    def to_dict(self):
        return {"kind": self.kind, "params": {"value": self.value}}


_KINDS = {"uniform": Uniform, "poisson": PoissonTruncated,
          "truncnorm": TruncatedNormal, "degenerate": Degenerate}


def distribution_from_dict(doc):
    """Build a distribution from ``{"kind": ..., "params": {...}}``."""
    try:
        cls = _KINDS[doc["kind"]]
    except KeyError as exc:
        raise DomainError(f"unknown attack distribution: {doc!r}") from exc
    params = dict(doc.get("params", {}))
    try:
        return cls(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {doc['kind']}: {exc}") from exc


def sample_attack(dist, rng, size=None):
    return dist.sample(rng, size)


def attack_mean(dist):
    return dist.mean()


def expected_min_drop(dist, ch):
    return dist.expect(lambda a: min_drop(a, ch))


def check_stability_assumption(dist, ch, A):
    """Check ``E[q_m(a)] < 1 / rho(A)^2``; returns ``(holds, lhs, rhs)``."""
    lhs = float(expected_min_drop(dist, ch))
    rho = spectral_radius(A)
    rhs = math.inf if rho == 0 else 1.0 / rho**2
    return lhs < rhs, lhs, rhs
