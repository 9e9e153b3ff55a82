"""Experiment configuration: defaults, file loading and validation.

A config is a nested mapping. Files may be JSON or flat ``key = value`` lines
with dotted keys (``train.epochs = 1000``); values in the flat form are parsed
as JSON when possible and kept as strings otherwise. Every key must exist in
the experiment's defaults, except that a ``measure`` or ``payoff`` block
naming a different kind replaces the default block wholesale.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, fields
from pathlib import Path

from .costs import CostSpec
from .measures import make_measure
from .neural import TrainConfig
from .payoffs import make_payoff

EXPERIMENTS = ("earthquake", "bull-spread", "max-call", "dim-sweep", "ctransform-grid",
               "moment-bounds")


class ConfigError(ValueError):
    pass


_TRAIN = asdict(TrainConfig())

DEFAULTS = {
    "earthquake": {
        "seed": 0,
        "measure": {"kind": "gaussian", "mean": [0.75, 0.25], "cov": [[1.0, 0.0], [0.0, 1.0]]},
        "payoff": {"name": "earthquake"},
        "cost": {"power": 2.0, "timescale": None, "scale": 1.0},
        "train": {**_TRAIN, "regime": "unconstrained"},
        "surface": {"axes": [[-1.0, 2.5, 36], [-1.5, 2.0, 36]]},
        "oracle_samples": 2000,
    },
    "bull-spread": {
        "seed": 0,
        "measure": {"kind": "lognormal_bs", "spot": 1.0, "vol": 0.2, "maturity": 0.5},
        "payoff": {"name": "bull_spread", "K1": 0.9, "K2": 1.2},
        "cost": {"power": 3.0, "scale": 1.0},
        "t_list": [1 / 52, 1 / 26, 1 / 12, 1 / 6, 1 / 4, 1 / 3, 5 / 12, 1 / 2],
        "method": "pointwise",
        "samples": 100_000,
        "interp_points": 4001,
        "domain": [0.0, None],
        "train": {**_TRAIN, "regime": "martingale"},
        "ctransform": {"t": 1 / 12, "axes": [[0.0, 3.0, 301]]},
    },
    "max-call": {
        "seed": 0,
        "measure": {"kind": "diffusion", "x0": [1.0, 1.0], "sigma": [[0.30, 0.0], [0.05, 0.20]],
                    "maturity": 1.0},
        "payoff": {"name": "max_call", "K": 1.0},
        "cost": {"power": 3.0, "timescale": 1 / 12, "scale": 1.0},
        "train": {**_TRAIN, "regime": "martingale"},
        "surface": {"axes": [[0.5, 1.5, 21], [0.5, 1.5, 21]]},
        "oracle_samples": 5000,
        "domain": [0.0, None],
    },
    "dim-sweep": {
        "seed": 0,
        "d_list": list(range(1, 17)),
        "options": ["max_call", "basket_call", "min_put", "geometric_put"],
        "strike": 1.0,
        "measure": {"vol": 0.2, "maturity": 1.0, "x0": 1.0, "corr": 0.0},
        "cost": {"power": 3.0, "timescale": 1 / 12, "scale": 1.0},
        "train": {**_TRAIN, "regime": "martingale", "eval_samples": 100_000},
    },
    "ctransform-grid": {
        "seed": 0,
        "payoff": {"name": "bull_spread", "K1": 0.9, "K2": 1.2},
        "cost": {"power": 3.0, "timescale": 1 / 12, "scale": 1.0},
        "regime": "martingale",
        "axes": [[0.0, 3.0, 301]],
        "domain": [0.0, None],
    },
    "moment-bounds": {
        "seed": 0,
        "problem_file": None,
        "x0": [1.0],
        "target": {"name": "bull_spread", "K1": 0.9, "K2": 1.2},
        "instruments": [],
        "domain": [0.0, 3.0],
        "optimizer": {"starts": 8, "grid_points": 601, "cloud_points": 4000,
                      "penalty0": 10.0, "penalty_doublings": 12, "feas_tol": 1e-6,
                      "max_iter": 200},
    },
}

# blocks whose contents are free-form (validated by the builder, not by key lookup)
_REPLACEABLE = {"measure": "kind", "payoff": "name", "target": "name"}
_OPAQUE = {"instruments", "t_list", "d_list", "options", "axes", "domain", "x0", "mean", "cov",
           "sigma", "a", "bumps", "points", "spot", "corr"}


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_flat(text: str) -> dict:
    """Parse ``key = value`` lines with dotted keys into a nested mapping."""
    out: dict = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = line.split("=", 1)
        parts = [p.strip() for p in key.strip().split(".")]
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {n}: {key.strip()!r} conflicts with an earlier value")
        node[parts[-1]] = _parse_value(value)
    return out


def load_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return data
    return parse_flat(text)


def _merge(base: dict, over: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        tag = _REPLACEABLE.get(key)
        if tag and not (isinstance(base[key], dict) and tag in base[key]):
            tag = None
        if tag and isinstance(value, dict) and value.get(tag, base[key].get(tag)) != base[key].get(tag):
            out[key] = copy.deepcopy(value)
        elif isinstance(base[key], dict) and key not in _OPAQUE:
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a mapping")
            if tag:
                # same kind: known parameters are merged, extra ones are left to the builder
                merged = copy.deepcopy(base[key])
                merged.update(value)
                out[key] = merged
            else:
                out[key] = _merge(base[key], value, path)
        else:
            out[key] = value
    return out


def resolve(experiment: str, user: dict | None = None, *, seed: int | None = None,
            epochs: int | None = None) -> dict:
    """Defaults overlaid with ``user`` and CLI overrides, validated by building every object."""
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {list(EXPERIMENTS)}")
    cfg = _merge(DEFAULTS[experiment], user or {}, "")
    if seed is not None:
        cfg["seed"] = seed
    if "train" in cfg:
        cfg["train"]["seed"] = cfg["seed"]
        if epochs is not None:
            cfg["train"]["epochs"] = epochs
            cfg["train"]["window"] = min(cfg["train"]["window"], epochs)
    validate(experiment, cfg)
    return cfg


def train_config(cfg: dict, **over) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in {**cfg["train"], **over}.items() if k in known})


def cost_spec(block: dict, **over) -> CostSpec:
    block = {**block, **over}
    return CostSpec(float(block["power"]), block.get("timescale"), float(block.get("scale", 1.0)))


def validate(experiment: str, cfg: dict) -> None:
    try:
        if "measure" in cfg and experiment != "dim-sweep":
            make_measure(cfg["measure"])
        if "payoff" in cfg:
            make_payoff(**cfg["payoff"])
        if "target" in cfg:
            make_payoff(**cfg["target"])
        if "cost" in cfg:
            cost_spec(cfg["cost"])
        if "train" in cfg:
            train_config(cfg)
        if experiment == "bull-spread":
            if cfg["method"] not in ("pointwise", "network"):
                raise ValueError(f"unknown method {cfg['method']!r}")
            ts = cfg["t_list"]
            if not ts or any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("t_list must be positive and strictly increasing")
        if experiment == "dim-sweep":
            for name in cfg["options"]:
                make_payoff(name, K=cfg["strike"], dim=1)
            if any(int(d) < 1 for d in cfg["d_list"]):
                raise ValueError("d_list entries must be positive")
        if experiment == "ctransform-grid" and cfg["regime"] not in ("unconstrained", "martingale"):
            raise ValueError(f"unknown regime {cfg['regime']!r}")
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {experiment} config: {exc}") from None
