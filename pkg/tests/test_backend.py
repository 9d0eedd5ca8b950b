import numba
import numpy as np
import pytest

from powersched import _backend, kernels
from powersched.presets import paper_attack, paper_channel, paper_model
from powersched.sched import GreedyKnown
from powersched.sim import ExperimentSpec, run_monte_carlo


@pytest.mark.parametrize("value, expected", [("numba", "numba"), ("numpy", "numpy"), (" NumPy ", "numpy")])
def test_env_flag_selects_backend(monkeypatch, value, expected):
    monkeypatch.setenv(_backend.BACKEND_ENV, value)
    assert _backend.requested_backend() == expected


def test_default_and_bad_flag(monkeypatch):
    monkeypatch.delenv(_backend.BACKEND_ENV, raising=False)
    assert _backend.requested_backend() == "numba"
    monkeypatch.setenv(_backend.BACKEND_ENV, "fortran")
    with pytest.raises(ValueError):
        _backend.requested_backend()


def test_env_flag_reaches_kernels(monkeypatch):
    spec = ExperimentSpec(paper_model(), paper_channel(), paper_attack(), GreedyKnown(),
                          lam=1.0, T=20, trials=64)
    calls = []
    for name in ("_simulate_numba", "_simulate_numpy"):
        real = getattr(kernels, name)
        monkeypatch.setattr(kernels, name, lambda *a, _n=name, _r=real: (calls.append(_n), _r(*a)))
    out = {}
    for flag in ("numba", "numpy"):
        monkeypatch.setenv(_backend.BACKEND_ENV, flag)
        out[flag] = run_monte_carlo(spec).samples
    assert calls == ["_simulate_numba", "_simulate_numpy"]
    np.testing.assert_allclose(out["numba"], out["numpy"], rtol=1e-10, atol=1e-14)


def test_thread_limit(monkeypatch):
    before = numba.get_num_threads()
    monkeypatch.setenv(_backend.THREADS_ENV, "1")
    _backend.apply_thread_limit()
    assert numba.get_num_threads() == 1
    numba.set_num_threads(before)
