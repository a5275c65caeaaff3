"""Experiment configuration: dataclasses, JSON-schema validation, file loading and overrides."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema
import yaml

from ..core import ConfigError
from ..samplers import KINDS

ENV_PREFIX = "LWA_"
MODELS = ("probit", "arma", "gaussmix")
STATS = ("identity_mean", "arma_s0", "arma_s1", "arma_s2", "class_counts")
SUBSET_PROPOSALS = ("uniform_swap", "window_mixture", "uniform_subset")
SWEEP_AXES = ("eps", "n", "stat")
# sweep values on the eps axis that switch sampler kind
EPS_EXTREMES = {"free": "free_subset", "fixed": "fixed_subset"}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_obj = {"type": "object"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "data", "sampler"],
    "properties": {
        "name": {"type": "string"},
        "model": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {"kind": {"enum": list(MODELS)}, "params": _obj},
        },
        "data": {
            "type": "object", "additionalProperties": False,
            "properties": {"N": _posint, "params": _obj, "seed": {"type": "integer", "minimum": 0},
                           "path": {"type": "string"},
                           "values": {"type": "array", "items": _num, "minItems": 1},
                           "labels": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        },
        "sampler": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {"kind": {"enum": list(KINDS)}, "n": _posint, "eps": _pos, "L": _posint,
                           "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                           "batch_base": {"type": "integer", "minimum": 2}},
        },
        "statistic": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {"kind": {"enum": list(STATS)}, "params": _obj},
        },
        "subset_proposal": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {"kind": {"enum": list(SUBSET_PROPOSALS)}, "params": _obj},
        },
        "proposal": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "scale": {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]},
                "adapt": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"enabled": {"type": "boolean"},
                                   "target": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                                   "c": _pos, "exponent": _pos,
                                   "stop_after": {"type": ["integer", "null"], "minimum": 1}},
                },
            },
        },
        "init": {"oneOf": [{"const": "prior"}, {"type": "array", "items": _num, "minItems": 1}]},
        "budget": {
            "type": "object", "additionalProperties": False,
            "properties": {"iterations": _posint, "cost_units": _posint},
        },
        "burn_in": {"type": "integer", "minimum": 0},
        "replications": _posint,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "out": {"type": "string"},
        "workers": _posint,
        "write_traces": {"type": "boolean"},
        "sweep": {
            "type": "object", "additionalProperties": False, "required": ["axis", "values"],
            "properties": {"axis": {"enum": list(SWEEP_AXES)}, "values": {"type": "array", "minItems": 1}},
        },
    },
}


@dataclass
class ExperimentConfig:
    """Everything needed to generate data, run chains and sweep one setting axis."""

    model: dict
    data: dict
    sampler: dict
    statistic: Optional[dict] = None
    subset_proposal: Optional[dict] = None
    proposal: dict = field(default_factory=dict)
    init: Any = "prior"
    budget: dict = field(default_factory=dict)
    burn_in: int = 10_000
    replications: int = 1
    seed: int = 0
    out: str = "runs/experiment"
    workers: int = 1
    write_traces: bool = True
    sweep: Optional[dict] = None
    name: str = "experiment"

    @property
    def model_kind(self) -> str:
        return self.model["kind"]

    @property
    def data_seed(self) -> int:
        return int(self.data.get("seed", self.seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in d.items() if v is not None}

    def with_setting(self, axis: str, value) -> "ExperimentConfig":
        """Copy of this config with one sweep-axis value applied."""
        cfg = copy.deepcopy(self)
        cfg.sweep = None
        if axis == "eps":
            if value in EPS_EXTREMES:
                cfg.sampler["kind"] = EPS_EXTREMES[value]
            else:
                cfg.sampler["eps"] = float(value)
        elif axis == "n":
            cfg.sampler["n"] = int(value)
        elif axis == "stat":
            cfg.statistic = {"kind": str(value), "params": {}}
        else:
            raise ConfigError(f"unknown sweep axis {axis!r}")
        validate_consistency(cfg)
        return cfg


def _defaults(raw: dict) -> dict:
    d = copy.deepcopy(raw)
    d.setdefault("data", {})
    d.setdefault("proposal", {})
    d.setdefault("budget", {})
    d["model"].setdefault("params", {})
    d["data"].setdefault("params", {})
    s = d["sampler"]
    s.setdefault("eps", 1.0)
    s.setdefault("L", 1)
    s.setdefault("delta", 0.1)
    s.setdefault("batch_base", 1000)
    for key in ("statistic", "subset_proposal"):
        if d.get(key) is not None:
            d[key].setdefault("params", {})
    return d


def validate_consistency(cfg: ExperimentConfig) -> None:
    """Cross-field checks the schema cannot express."""
    kind = cfg.sampler["kind"]
    model = cfg.model_kind
    b = cfg.budget
    if not b.get("iterations") and not b.get("cost_units"):
        raise ConfigError("budget needs iterations or cost_units")
    if kind in ("lwa", "fixed_subset", "free_subset") and "n" not in cfg.sampler:
        raise ConfigError(f"sampler kind {kind} needs a subset size n")
    if not any(k in cfg.data for k in ("N", "path", "values")):
        raise ConfigError("data needs N (to simulate), path (to load) or inline values")
    if kind == "mhsublhd" and model == "arma":
        raise ConfigError("the subsampling baseline needs iid data, not a time series")
    if kind == "lwa":
        if cfg.statistic is None or cfg.subset_proposal is None:
            raise ConfigError("lwa needs a statistic and a subset_proposal")
        st, sp = cfg.statistic["kind"], cfg.subset_proposal["kind"]
        if sp == "window_mixture" and model != "arma":
            raise ConfigError("window_mixture proposal requires time-series data")
        if model == "arma" and sp != "window_mixture":
            raise ConfigError("the ARMA likelihood is only tractable on windows; use window_mixture")
        if st == "class_counts" and model != "gaussmix":
            raise ConfigError("class_counts statistic requires labeled data")
        if st.startswith("arma_") and model != "arma":
            raise ConfigError(f"statistic {st} is defined for time series only")
    if cfg.sweep is not None:
        axis, values = cfg.sweep["axis"], cfg.sweep["values"]
        for v in values:
            if axis == "eps" and not (v in EPS_EXTREMES or (isinstance(v, (int, float)) and v > 0)):
                raise ConfigError(f"eps sweep value {v!r} must be > 0, 'free' or 'fixed'")
            if axis == "n" and not (isinstance(v, int) and v >= 1):
                raise ConfigError(f"n sweep value {v!r} must be a positive integer")
            if axis == "stat" and v not in STATS:
                raise ConfigError(f"unknown statistic {v!r} in sweep")


def from_dict(raw: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {path}: {exc.message}") from None
    cfg = ExperimentConfig(**_defaults(raw))
    validate_consistency(cfg)
    return cfg


def _set_path(d: dict, keys, value) -> None:
    for k in keys[:-1]:
        if d.get(k) is None:
            d[k] = {}
        d = d[k]
    d[keys[-1]] = value


def env_overrides(environ=None) -> list:
    """``LWA_SAMPLER__EPS=0.01`` -> (["sampler", "eps"], 0.01); values are parsed as YAML scalars."""
    environ = os.environ if environ is None else environ
    out = []
    for name in sorted(environ):
        if name.startswith(ENV_PREFIX):
            keys = [k.lower() for k in name[len(ENV_PREFIX):].split("__") if k]
            if keys:
                out.append((keys, yaml.safe_load(environ[name])))
    return out


def load_raw(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    text = p.read_text()
    try:
        raw = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{p} must contain a mapping")
    return raw


def load_config(path, overrides=(), environ=None) -> ExperimentConfig:
    """Load YAML/JSON, apply environment then explicit ``(keys, value)`` overrides, validate."""
    raw = load_raw(path)
    for keys, value in list(env_overrides(environ)) + list(overrides):
        _set_path(raw, keys, value)
    return from_dict(raw)
