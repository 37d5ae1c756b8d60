"""JSON experiment configuration."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .dpp import GridConfig
from .model import (Ball, Box, ConstantPayoff, GameParams, LinearPayoff,
                    PayoffField, SpaceTimeDomain, TabulatedPayoff, make_params)
from .reference import REFERENCE_IDS, make_reference


class ConfigError(ValueError):
    pass


def _require(d: dict, key: str, where: str = "config"):
    if key not in d:
        raise ConfigError(f"{where} is missing required key {key!r}")
    return d[key]


def parse_shape(d: dict):
    kind = _require(d, "shape", "domain")
    if kind == "box":
        return Box(tuple(map(float, _require(d, "lower", "domain"))),
                   tuple(map(float, _require(d, "upper", "domain"))))
    if kind == "ball":
        return Ball(tuple(map(float, _require(d, "center", "domain"))),
                    float(_require(d, "radius", "domain")))
    raise ConfigError(f"unknown domain shape {kind!r}")


def parse_payoff(d: dict, params: GameParams) -> PayoffField:
    kind = _require(d, "kind", "payoff")
    if kind == "constant":
        return ConstantPayoff(float(d.get("c", 0.0)))
    if kind == "linear":
        a = tuple(map(float, _require(d, "a", "payoff")))
        if len(a) != params.n:
            raise ConfigError("linear payoff needs len(a) == n")
        return LinearPayoff(a, float(d.get("b", 0.0)))
    if kind == "from_reference":
        ref_id = _require(d, "id", "payoff")
        if ref_id not in REFERENCE_IDS:
            raise ConfigError(f"unknown reference id {ref_id!r}")
        extra = {k: v for k, v in d.items() if k not in ("kind", "id")}
        return make_reference(ref_id, params, **extra)
    if kind == "tabulated":
        axes = tuple(np.asarray(a, float) for a in _require(d, "axes", "payoff"))
        return TabulatedPayoff(axes, np.asarray(_require(d, "times", "payoff"), float),
                               np.asarray(_require(d, "values", "payoff"), float))
    raise ConfigError(f"unknown payoff kind {kind!r}")


@dataclass
class ExperimentConfig:
    raw: dict
    params: GameParams
    domain: SpaceTimeDomain
    payoff: PayoffField
    grid: GridConfig
    seed: int = 0
    samples: int = 10_000
    epsilons: list = field(default_factory=list)
    probes: list = field(default_factory=list)  # (x, t) pairs

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))


def parse_probes(items) -> list:
    out = []
    for row in items:
        row = [float(v) for v in row]
        out.append((np.array(row[:-1]), row[-1]))
    return out


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        params = make_params(int(_require(raw, "n")), float(_require(raw, "p")),
                             float(_require(raw, "epsilon")), raw.get("scaling", "standard"))
        shape = parse_shape(_require(raw, "domain"))
        domain = SpaceTimeDomain(shape, float(_require(raw, "T")))
        domain.check_params(params)
        payoff = parse_payoff(raw.get("payoff", {"kind": "constant", "c": 0.0}), params)
        g = raw.get("grid", {})
        grid = GridConfig(h=g.get("h"), h_ratio=float(g.get("h_ratio", 8.0)), n_dir=g.get("n_dir"))
        probes = parse_probes(raw.get("probes", []))
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for x, _ in probes:
        if len(x) != params.n:
            raise ConfigError("probe dimension does not match n")
    return ExperimentConfig(raw, params, domain, payoff, grid,
                            seed=int(raw.get("seed", 0)), samples=int(raw.get("samples", 10_000)),
                            epsilons=[float(e) for e in raw.get("epsilons", [])], probes=probes)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(raw)
