"""Closed-loop trials and Monte Carlo aggregation.

Every trial draws from four counter-based Philox streams keyed by the master
seed and addressed by ``(trial_index, substream)``; the substreams carry the
initial state, the process noise, the attack energies and the uniforms that
decide packet delivery.  A trial's numbers therefore never depend on how
trials are chunked or threaded, and all schedulers evaluated with one seed
see identical disturbances.
"""

import dataclasses
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import ChannelModel, q_tail_inv
from .control import SystemModel
from .dp import finite_dp_solve, infinite_dp_solve
from .errors import DomainError, PowerSchedError
from .kernels import METRICS
from .sched import (ConstantPower, GreedyKnown, GreedyMean, GridDPFinite, GridDPInfinite,
                    OptimalConstant, optimal_constant)

SUB_X0, SUB_W, SUB_A, SUB_DELTA = range(4)
CHUNK = 4096


@dataclass(frozen=True)
class ExperimentSpec:
    model: SystemModel
    ch: ChannelModel
    dist: object
    sched: object
    lam: float = 1.0
    T: int = 100
    trials: int = 1000
    master_seed: int = 0
    gains_mode: str = "stationary"
    record_traces: bool = False

    def __post_init__(self):
        if self.T < 1 or self.trials < 1:
            raise DomainError("horizon and trial count must be >= 1")
        if not self.lam > 0:
            raise DomainError(f"tradeoff multiplier must be > 0, got {self.lam}")
        if self.gains_mode not in ("stationary", "finite"):
            raise DomainError(f"gains_mode must be 'stationary' or 'finite', got {self.gains_mode!r}")
        if self.gains_mode == "stationary" and not self.model.gamma < 1:
            raise DomainError("stationary gains need gamma < 1")
        if not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def effective_horizon(gamma, tail_tol):
    """Smallest ``T >= 1`` with ``gamma^T / (1 - gamma) <= tail_tol``."""
    if not 0 < gamma < 1 or not tail_tol > 0:
        raise DomainError("need 0 < gamma < 1 and tail_tol > 0")
    T = max(1, math.ceil(math.log(tail_tol * (1 - gamma)) / math.log(gamma)))
    # guard the ceil against rounding on either side
    while T > 1 and gamma ** (T - 1) / (1 - gamma) <= tail_tol:
        T -= 1
    while gamma**T / (1 - gamma) > tail_tol:
        T += 1
    return T


# --------------------------------------------------------------------------
# random streams


def _key(master_seed):
    return np.random.SeedSequence(int(master_seed)).generate_state(2, np.uint64)


def stream(master_seed, trial_index, substream, key=None):
    """Counter-based generator for one (trial, substream) pair."""
    key = _key(master_seed) if key is None else key
    bitgen = np.random.Philox(key=key, counter=[0, 0, int(substream), int(trial_index)])
    return np.random.Generator(bitgen)


def _psd_factor(M):
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    return V * np.sqrt(np.clip(lam, 0.0, None))


def draw_noise(model, dist, T, master_seed, start, stop):
    """Pre-drawn disturbances for trials ``start..stop-1``."""
    n = model.n
    N = stop - start
    key = _key(master_seed)
    Fx, Fw = _psd_factor(model.X0), _psd_factor(model.W)
    x0 = np.empty((N, n))
    w = np.empty((N, T, n))
    a = np.empty((N, T))
    u = np.empty((N, T))
    for j, i in enumerate(range(start, stop)):
        x0[j] = model.xbar0 + Fx @ stream(0, i, SUB_X0, key).standard_normal(n)
        w[j] = stream(0, i, SUB_W, key).standard_normal((T, n)) @ Fw.T
        a[j] = dist.sample(stream(0, i, SUB_A, key), T)
        u[j] = stream(0, i, SUB_DELTA, key).random(T)
    return {"x0": x0, "w": w, "a": a, "u": u}


_NOISE_CACHE = OrderedDict()
_NOISE_CACHE_SIZE = 4


def _noise_key(model, dist, T, seed, start, stop):
    return (model.W.tobytes(), model.X0.tobytes(), model.xbar0.tobytes(), model.n,
            repr(dist), T, int(seed), start, stop)


def cached_noise(model, dist, T, master_seed, start, stop):
    """:func:`draw_noise` with a small LRU cache (sweeps reuse disturbances)."""
    key = _noise_key(model, dist, T, master_seed, start, stop)
    hit = _NOISE_CACHE.get(key)
    if hit is not None:
        _NOISE_CACHE.move_to_end(key)
        return hit
    noise = draw_noise(model, dist, T, master_seed, start, stop)
    _NOISE_CACHE[key] = noise
    while len(_NOISE_CACHE) > _NOISE_CACHE_SIZE:
        _NOISE_CACHE.popitem(last=False)
    return noise


# --------------------------------------------------------------------------
# preparation


@dataclass
class Prepared:
    spec: ExperimentSpec
    gains: object
    params: dict
    table: object = None
    constant: object = None


def prepare(spec):
    """Solve gains and any scheduler tables; returns kernel-ready parameters."""
    model, ch = spec.model, spec.ch
    gains = model.gains(spec.gains_mode, T=spec.T)
    L_seq, S_seq = gains.expand(spec.T)
    kind, cpar = kernels.KIND_GREEDY, np.zeros(1)
    iota, e0, eh = np.empty((0, 0)), 0.0, 1.0
    table = constant = None
    sched = spec.sched
    if isinstance(sched, ConstantPower):
        if not 0 <= sched.p <= ch.p_max:
            raise DomainError(f"constant power {sched.p} outside [0, {ch.p_max}]")
        kind, cpar = kernels.KIND_CONSTANT, np.array([float(sched.p)])
    elif isinstance(sched, GreedyMean):
        kind, cpar = kernels.KIND_GREEDY_MEAN, np.array([float(spec.dist.mean())])
    elif isinstance(sched, OptimalConstant):
        constant = optimal_constant(model, ch, spec.dist, spec.lam,
                                    Sigma=gains.Sigma if gains.stationary else None,
                                    P=gains.P if gains.stationary else None)
        x = float(q_tail_inv(constant.q / 2.0)) if constant.q < 1 else 0.0
        kind, cpar = kernels.KIND_CONST_DROP, np.array([x * x])
    elif isinstance(sched, GridDPFinite):
        table = finite_dp_solve(model, ch, spec.dist, sched.grid, spec.T, spec.lam,
                                gains_mode=spec.gains_mode)
    elif isinstance(sched, GridDPInfinite):
        table = infinite_dp_solve(model, ch, spec.dist, sched.grid, spec.lam, tol=sched.tol,
                                  Sigma=gains.Sigma if gains.stationary else None)
    elif not isinstance(sched, GreedyKnown):
        raise DomainError(f"unsupported scheduler {sched!r}")
    if table is not None:
        iota = np.ascontiguousarray(table.iota_rows())
        e0, eh = float(table.egrid[0]), float(table.egrid[1] - table.egrid[0])
    params = {"A": model.A, "B": model.B, "L_seq": L_seq, "S_seq": S_seq, "Q": model.Q,
              "R": model.R, "QN": model.Q_N, "gamma": model.gamma, "lam": spec.lam,
              "alpha": ch.alpha, "sigma2": ch.sigma2, "pmax": ch.p_max, "kind": kind,
              "cpar": cpar, "iota": iota, "e0": e0, "eh": eh, "xbar0": model.xbar0}
    return Prepared(spec=spec, gains=gains, params=params, table=table, constant=constant)


# --------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class TrialMetrics:
    reduced_cost: float
    lqg_cost: float
    mse_avg: float
    power_avg: float
    success_rate: float
    error_cost: float
    drop_weighted_cost: float

    @classmethod
    def from_row(cls, row):
        return cls(*(float(v) for v in row))


@dataclass
class SimTrace:
    """Per-step records for ``k = 0..T``; decision fields are NaN at ``k = T``."""

    x: np.ndarray
    xhat: np.ndarray
    u: np.ndarray
    a: np.ndarray
    p: np.ndarray
    q: np.ndarray
    delta: np.ndarray
    seed: int = 0
    trial_index: int = 0

    @property
    def e(self):
        return self.x - self.xhat

    @property
    def header(self):
        n, m = self.x.shape[1], self.u.shape[1]
        cols = ["k"]
        cols += [f"x{i}" for i in range(n)] + [f"xhat{i}" for i in range(n)]
        cols += [f"e{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
        return cols + ["a", "p", "q", "delta"]

    def rows(self):
        e = self.e
        for k in range(self.x.shape[0]):
            yield [k, *self.x[k], *self.xhat[k], *e[k], *self.u[k],
                   self.a[k], self.p[k], self.q[k], self.delta[k]]


def _run_range(prep, start, stop, record=False, backend=None):
    spec = prep.spec
    noise = cached_noise(spec.model, spec.dist, spec.T, spec.master_seed, start, stop)
    return kernels.simulate_batch(prep.params, noise, record=record, backend=backend)


def run_trial(spec, trial_index, prepared=None, backend=None):
    """One trial; returns ``(TrialMetrics, SimTrace or None)``."""
    prep = prepared or prepare(spec)
    out, tr = _run_range(prep, trial_index, trial_index + 1, record=spec.record_traces,
                         backend=backend)
    trace = None
    if tr is not None:
        trace = SimTrace(x=tr["x"][0], xhat=tr["xhat"][0], u=tr["u"][0], a=tr["a"][0],
                         p=tr["p"][0], q=tr["q"][0], delta=tr["delta"][0],
                         seed=spec.master_seed, trial_index=trial_index)
    return TrialMetrics.from_row(out[0]), trace


@dataclass
class AggregateReport:
    """Per-metric mean / std / stderr over trials, with the raw samples."""

    mean: dict
    std: dict
    stderr: dict
    trials: int
    samples: np.ndarray = field(repr=False)
    config: dict = field(default_factory=dict)

    def __getitem__(self, metric):
        return self.mean[metric], self.stderr[metric]

    def column(self, metric):
        return self.samples[:, METRICS.index(metric)]


def summarize(samples, config=None):
    N = samples.shape[0]
    mean = samples.mean(axis=0)
    std = samples.std(axis=0, ddof=1) if N > 1 else np.zeros(samples.shape[1])
    se = std / math.sqrt(N)
    return AggregateReport(mean=dict(zip(METRICS, map(float, mean))),
                           std=dict(zip(METRICS, map(float, std))),
                           stderr=dict(zip(METRICS, map(float, se))),
                           trials=N, samples=samples, config=config or {})


def run_monte_carlo(spec, prepared=None, backend=None, chunk=CHUNK):
    """Aggregate trials ``0..trials-1`` in trial order."""
    prep = prepared or prepare(spec)
    parts = []
    for start in range(0, spec.trials, chunk):
        stop = min(start + chunk, spec.trials)
        try:
            out, _ = _run_range(prep, start, stop, backend=backend)
        except PowerSchedError as exc:
            raise type(exc)(f"trial block starting at {start}: {exc}") from exc
        if not np.all(np.isfinite(out)):
            bad = start + int(np.argwhere(~np.isfinite(out))[0, 0])
            raise FloatingPointError(f"non-finite metrics in trial {bad}")
        parts.append(out)
    return summarize(np.concatenate(parts, axis=0))
