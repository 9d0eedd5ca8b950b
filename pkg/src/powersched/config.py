"""JSON configuration documents.

A document has five required sections and one optional one::

    {"system":     {"A", "B", "W", "Q", "R", "Q_N", "xbar0", "X0", "gamma"},
     "channel":    {"alpha", "sigma2", "p_max"},
     "attack":     {"kind", "params"},
     "scheduler":  {"kind", "params"},
     "experiment": {"lambda", "horizon", "trials", "seed", "gains_mode", "record_traces"},
     "sweep":      {"powers", "lambdas", "dists", "greedy", "power_range", "n_lambda",
                    "pilot_trials"}}

Matrices are row-major nested lists.  Missing keys inside a section fall back
to the reference second-order setup; unknown keys anywhere are rejected.
"""

import copy
import json
import math
from dataclasses import dataclass

from .channel import ChannelModel, distribution_from_dict
from .control import SystemModel
from .errors import ConfigError, PowerSchedError
from .sched import scheduler_from_dict, scheduler_to_dict
from .sim import ExperimentSpec

DEFAULTS = {
    "system": {
        "A": [[1.3, 0.0], [0.0, -1.1]],
        "B": [[0.1], [0.1]],
        "W": [[0.001, 0.0], [0.0, 0.001]],
        "Q": [[1.0, 0.0], [0.0, 1.0]],
        "R": [[1.0]],
        "Q_N": [[1.0, 0.0], [0.0, 1.0]],
        "xbar0": [0.0, 0.0],
        "X0": [[0.01, 0.0], [0.0, 0.01]],
        "gamma": 0.9,
    },
    "channel": {"alpha": 3.0, "sigma2": 1.0, "p_max": 3.0},
    "attack": {"kind": "uniform", "params": {"lo": 0.0, "hi": 1.0}},
    "scheduler": {"kind": "greedy_known", "params": {}},
    "experiment": {"lambda": 1.0, "horizon": 196, "trials": 20000, "seed": 0,
                   "gains_mode": "stationary", "record_traces": False},
}

SWEEP_DEFAULTS = {
    "powers": [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8],
    "lambdas": [0.01, 0.1, 1.0],
    "dists": [
        {"kind": "uniform", "params": {"lo": 0.0, "hi": 1.0}},
        {"kind": "poisson", "params": {"rate": 0.5}},
        {"kind": "truncnorm", "params": {"mu": 0.5, "sigma": 1 / 12, "lo": 0.0, "hi": 1.0}},
        {"kind": "uniform", "params": {"lo": 0.0, "hi": 2.0}},
        {"kind": "poisson", "params": {"rate": 1.0}},
        {"kind": "truncnorm", "params": {"mu": 1.0, "sigma": 1 / 3, "lo": 0.0, "hi": 2.0}},
    ],
    "greedy": ["greedy_known", "greedy_mean"],
    "power_range": [0.4, 1.8],
    "n_lambda": 16,
    "pilot_trials": 1000,
}

_INT_KEYS = {"horizon", "trials", "seed", "n_lambda", "pilot_trials"}


@dataclass(frozen=True)
class Config:
    """A resolved document and the objects built from it."""

    doc: dict
    spec: ExperimentSpec
    sweep: dict

    def to_json(self):
        return json.dumps(self.doc, indent=2, sort_keys=True)


def _check_finite(value, where):
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise ConfigError(f"{where}: non-finite number")
        return
    if isinstance(value, list):
        for i, v in enumerate(value):
            _check_finite(v, f"{where}[{i}]")
        return
    if isinstance(value, dict):
        for k, v in value.items():
            _check_finite(v, f"{where}.{k}")
        return
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _merge(section, given, defaults):
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _kind_section(section, given, default):
    """``attack``/``scheduler``: a changed kind replaces the default params."""
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(given) - {"kind", "params"}
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    kind = given.get("kind", default["kind"])
    params = given.get("params", default["params"] if kind == default["kind"] else {})
    if not isinstance(kind, str) or not isinstance(params, dict):
        raise ConfigError(f"{section}: kind must be a string and params an object")
    return {"kind": kind, "params": copy.deepcopy(params)}


def resolve(doc):
    """Fill defaults and validate keys; returns the resolved document."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - set(DEFAULTS) - {"sweep"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    out = {}
    for section in ("system", "channel", "experiment"):
        out[section] = _merge(section, doc.get(section, {}), DEFAULTS[section])
    for section in ("attack", "scheduler"):
        out[section] = _kind_section(section, doc.get(section, {}), DEFAULTS[section])
    if "sweep" in doc:
        out["sweep"] = _merge("sweep", doc["sweep"], SWEEP_DEFAULTS)
    _check_finite(out, "config")
    for section in ("experiment", "sweep"):
        for key in _INT_KEYS & set(out.get(section, {})):
            v = out[section][key]
            if isinstance(v, bool) or not float(v).is_integer():
                raise ConfigError(f"{section}.{key} must be an integer, got {v!r}")
            out[section][key] = int(v)
    bad = set(out.get("sweep", {}).get("greedy", [])) - {"greedy_known", "greedy_mean"}
    if bad:
        raise ConfigError(f"sweep.greedy accepts greedy_known/greedy_mean, got {sorted(bad)}")
    if not isinstance(out["experiment"]["record_traces"], bool):
        raise ConfigError("experiment.record_traces must be true or false")
    return out


def build(doc):
    """Resolve ``doc`` and construct the experiment objects."""
    res = resolve(doc)
    sysd, chd, ex = res["system"], res["channel"], res["experiment"]
    try:
        model = SystemModel(**sysd)
        ch = ChannelModel(**chd)
        dist = distribution_from_dict(res["attack"])
        sched = scheduler_from_dict(res["scheduler"])
        spec = ExperimentSpec(model=model, ch=ch, dist=dist, sched=sched, lam=ex["lambda"],
                              T=ex["horizon"], trials=ex["trials"], master_seed=ex["seed"],
                              gains_mode=ex["gains_mode"], record_traces=ex["record_traces"])
        sweep = res.get("sweep", copy.deepcopy(SWEEP_DEFAULTS))
        sweep_dists = [distribution_from_dict(d) for d in sweep["dists"]]
    except ConfigError:
        raise
    except (PowerSchedError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return Config(doc=res, spec=spec, sweep={**sweep, "dist_objects": sweep_dists})


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return build(doc)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def default_document():
    return copy.deepcopy(DEFAULTS)


def document_for(spec, sweep=None):
    """Inverse of :func:`build` for specs whose pieces came from this package."""
    m = spec.model
    doc = {
        "system": {"A": m.A.tolist(), "B": m.B.tolist(), "W": m.W.tolist(), "Q": m.Q.tolist(),
                   "R": m.R.tolist(), "Q_N": m.Q_N.tolist(), "xbar0": m.xbar0.tolist(),
                   "X0": m.X0.tolist(), "gamma": float(m.gamma)},
        "channel": {"alpha": spec.ch.alpha, "sigma2": spec.ch.sigma2, "p_max": spec.ch.p_max},
        "attack": spec.dist.to_dict(),
        "scheduler": scheduler_to_dict(spec.sched),
        "experiment": {"lambda": spec.lam, "horizon": spec.T, "trials": spec.trials,
                       "seed": spec.master_seed, "gains_mode": spec.gains_mode,
                       "record_traces": spec.record_traces},
    }
    if sweep is not None:
        doc["sweep"] = sweep
    return resolve(doc)

