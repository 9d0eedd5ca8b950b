"""Reference configurations: the second-order jammed plant and a scalar benchmark."""

import numpy as np

from .channel import ChannelModel, Degenerate, PoissonTruncated, TruncatedNormal, Uniform
from .control import SystemModel


def paper_model(gamma=0.9):
    I = np.eye(2)
    return SystemModel(A=np.diag([1.3, -1.1]), B=np.array([[0.1], [0.1]]), W=0.001 * I,
                       Q=I, R=np.array([[1.0]]), Q_N=I, xbar0=np.zeros(2), X0=0.01 * I,
                       gamma=gamma)


def paper_channel(p_max=3.0):
    return ChannelModel(alpha=3.0, sigma2=1.0, p_max=p_max)


def paper_attack():
    return Uniform(0.0, 1.0)


def scalar_model(gamma=0.9):
    """Unstable scalar plant used for the grid DP checks."""
    return SystemModel(A=[[1.3]], B=[[0.1]], W=[[0.001]], Q=[[1.0]], R=[[1.0]], Q_N=[[1.0]],
                       xbar0=[0.0], X0=[[0.01]], gamma=gamma)


def mean_half_family():
    return [Uniform(0.0, 1.0), PoissonTruncated(0.5), TruncatedNormal(0.5, 1 / 12, 0.0, 1.0)]


def mean_one_family():
    return [Uniform(0.0, 2.0), PoissonTruncated(1.0), TruncatedNormal(1.0, 1 / 3, 0.0, 2.0)]


def six_distributions():
    return mean_half_family() + mean_one_family()


def label(dist):
    if isinstance(dist, Uniform):
        return f"uniform({dist.lo:g},{dist.hi:g})"
    if isinstance(dist, PoissonTruncated):
        return f"poisson({dist.rate:g};cap={dist.cap})"
    if isinstance(dist, TruncatedNormal):
        return f"truncnorm({dist.mu:g},{dist.sigma:.4g},{dist.lo:g},{dist.hi:g})"
    if isinstance(dist, Degenerate):
        return f"degenerate({dist.value:g})"
    return repr(dist)
