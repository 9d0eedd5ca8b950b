import json

import numpy as np
import pytest

from powersched.channel import PoissonTruncated, Uniform
from powersched.config import DEFAULTS, build, default_document, document_for, load, loads, resolve
from powersched.errors import ConfigError
from powersched.presets import paper_model
from powersched.sched import ConstantPower, GreedyKnown, GridDPInfinite


def test_default_document_reproduces_reference_setup():
    cfg = build({})
    m = cfg.spec.model
    ref = paper_model()
    for name in ("A", "B", "W", "Q", "R", "Q_N", "X0"):
        np.testing.assert_array_equal(getattr(m, name), getattr(ref, name))
    assert m.gamma == 0.9
    assert (cfg.spec.ch.alpha, cfg.spec.ch.sigma2, cfg.spec.ch.p_max) == (3.0, 1.0, 3.0)
    assert cfg.spec.dist == Uniform(0.0, 1.0)
    assert cfg.spec.sched == GreedyKnown()
    assert (cfg.spec.T, cfg.spec.trials, cfg.spec.lam) == (196, 20000, 1.0)


def test_config_file_matches_defaults():
    cfg = load("configs/paper.json")
    assert cfg.doc == resolve(default_document())


def test_roundtrip():
    doc = {"scheduler": {"kind": "constant", "params": {"p": 2.0}},
           "attack": {"kind": "poisson", "params": {"rate": 0.5}},
           "experiment": {"trials": 10, "seed": 5}}
    cfg = build(doc)
    assert cfg.spec.sched == ConstantPower(2.0)
    assert isinstance(cfg.spec.dist, PoissonTruncated)
    again = loads(cfg.to_json())
    assert again.doc == cfg.doc
    echoed = document_for(cfg.spec)
    assert build(echoed).spec.sched == cfg.spec.sched
    assert json.loads(json.dumps(echoed)) == echoed


def test_dp_scheduler_params():
    cfg = build({"scheduler": {"kind": "dp_infinite", "params": {"n_e": 65, "tol": 1e-7}}})
    assert isinstance(cfg.spec.sched, GridDPInfinite)
    assert cfg.spec.sched.grid.n_e == 65 and cfg.spec.sched.tol == 1e-7


@pytest.mark.parametrize("doc", [
    {"bogus": {}},
    {"system": {"A": [[1.0]], "extra": 1}},
    {"channel": {"alpha": float("inf")}},
    {"channel": {"alpha": float("nan")}},
    {"experiment": {"trials": 1.5}},
    {"experiment": {"record_traces": "yes"}},
    {"system": {"A": [[1.0, 0.0]]}},
    {"attack": {"kind": "weird"}},
    {"scheduler": {"kind": "constant", "params": {"q": 1}}},
    {"sweep": {"greedy": ["dp"]}},
    [],
    {"channel": "x"},
])
def test_rejections(doc):
    with pytest.raises(ConfigError):
        build(doc)


def test_malformed_text(tmp_path):
    with pytest.raises(ConfigError):
        loads("{not json")
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.json")


def test_defaults_not_mutated():
    before = json.dumps(DEFAULTS, sort_keys=True)
    cfg = build({"system": {"gamma": 0.8}})
    cfg.doc["system"]["A"][0][0] = 99.0
    assert json.dumps(DEFAULTS, sort_keys=True) == before
