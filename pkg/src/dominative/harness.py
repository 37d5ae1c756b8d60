"""Experiment orchestration: convergence studies, game-vs-grid comparison,
output files and run manifests."""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig
from .dpp import solve_dpp
from .game import (direction_gap, estimate_value, fixed_strategy, greedy_strategy,
                   random_direction_strategy, stopping_bound)
from .model import dist_to_lateral_boundary
from .reference import REFERENCE_IDS, make_reference, validate_reference

NUMBER_FORMAT = "%.12e"
EXACT_TOL = 1e-12


def worker_count() -> int:
    raw = os.environ.get("DOMINATIVE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DOMINATIVE_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("DOMINATIVE_THREADS must be >= 1")
    return n


# --------------------------------------------------------------------------
# output helpers

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return NUMBER_FORMAT % v
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    versions: dict = field(default_factory=lambda: {
        "dominative": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "python": platform.python_version()})
    outputs: list = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)

    def add(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        self.outputs.append(str(path))
        return write_json(path, asdict(self))


# --------------------------------------------------------------------------
# convergence

@dataclass
class ConvergenceStudy:
    reference: str
    epsilons: list
    h: list
    probes: list
    errors: list
    seconds: list
    rate: Optional[float]
    exact: bool

    def monotone(self, noise: float = 1.2) -> bool:
        return all(b <= a * noise for a, b in zip(self.errors, self.errors[1:]))

    def rows(self):
        return [(e, h, err, s) for e, h, err, s in zip(self.epsilons, self.h, self.errors, self.seconds)]


def fit_rate(epsilons, errors) -> Optional[float]:
    """Least-squares slope of log(error) against log(eps)."""
    e = np.asarray(errors, float)
    if len(e) < 3 or np.all(e <= EXACT_TOL):
        return None
    slope, _ = np.polyfit(np.log(epsilons), np.log(np.maximum(e, 1e-300)), 1)
    return float(slope)


def _check_probes(cfg: ExperimentConfig, max_eps: float):
    for x, t in cfg.probes:
        d, inside = dist_to_lateral_boundary(cfg.domain, x)
        if not inside or d <= max_eps or t <= max_eps or t > cfg.domain.T:
            raise ConfigError(f"probe ({x.tolist()}, {t}) lies within {max_eps} of the parabolic boundary")


def run_convergence(cfg: ExperimentConfig, reference: Optional[str] = None) -> ConvergenceStudy:
    """Solve for each eps with data from a reference solution; record probe errors."""
    ref_cfg = cfg.section("payoff")
    ref_id = reference or ref_cfg.get("id")
    if ref_id not in REFERENCE_IDS:
        raise ConfigError("convergence needs a payoff of kind from_reference")
    eps_list = list(cfg.epsilons) or [cfg.params.epsilon]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("epsilons must be strictly decreasing")
    if not cfg.probes:
        raise ConfigError("convergence needs probes")
    _check_probes(cfg, max(eps_list))
    extra = {k: v for k, v in ref_cfg.items() if k not in ("kind", "id")}

    def one(eps):
        params = cfg.params.with_epsilon(eps)
        cfg.domain.check_params(params)
        sol = make_reference(ref_id, params, **extra)
        validate_reference(sol, params, [x for x, _ in cfg.probes], [t for _, t in cfg.probes])
        start = time.perf_counter()
        grid = solve_dpp(cfg.domain, sol, params, cfg.grid)
        err = max(abs(grid.value_at(x, t) - float(sol(x, t))) for x, t in cfg.probes)
        return grid.h, err, time.perf_counter() - start

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(one, eps_list))
    errors = [r[1] for r in results]
    exact = all(e <= EXACT_TOL for e in errors)
    return ConvergenceStudy(ref_id, eps_list, [r[0] for r in results],
                            [(x.tolist(), t) for x, t in cfg.probes], errors,
                            [r[2] for r in results], None if exact else fit_rate(eps_list, errors),
                            exact)


# --------------------------------------------------------------------------
# game against grid

@dataclass
class ProbeComparison:
    x: list
    t: float
    strategy: str
    grid_value: float
    mean: float
    std_error: float
    confidence_radius: float
    eta: float
    max_tau: int
    passed: bool

    @property
    def discrepancy(self) -> float:
        return self.mean - self.grid_value


@dataclass
class GameVsDppReport:
    rows: list
    tolerance: float
    stopping_bound: float
    bound_violations: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and self.bound_violations == 0

    def max_standardized(self, strategy: str = "greedy") -> float:
        vals = [abs(r.discrepancy) / max(r.std_error, 1e-300) for r in self.rows
                if r.strategy == strategy]
        return max(vals) if vals else 0.0


def make_strategy(name: str, grid, n: int, direction=None):
    if name == "greedy":
        return greedy_strategy(grid)
    if name == "fixed":
        d = np.zeros(n) if direction is None else np.asarray(direction, float)
        if direction is None:
            d[0] = 1.0
        return fixed_strategy(d)
    if name == "random":
        return random_direction_strategy()
    raise ConfigError(f"unknown strategy {name!r}")


def run_game_vs_dpp(cfg: ExperimentConfig, strategies=("greedy", "fixed"),
                    tolerance: Optional[float] = None, grid=None,
                    min_samples: int = 10_000) -> GameVsDppReport:
    """Greedy play must match the grid; other strategies may not beat it."""
    if cfg.samples < min_samples:
        raise ConfigError(f"game comparison needs at least {min_samples} samples")
    if not cfg.probes:
        raise ConfigError("game comparison needs probes")
    grid = grid or solve_dpp(cfg.domain, cfg.payoff, cfg.params, cfg.grid)
    tol = 5 * grid.h**2 if tolerance is None else tolerance
    bound = stopping_bound(cfg.domain, cfg.params)
    sec = cfg.section("compare")
    rows, violations = [], 0
    for i, (x, t) in enumerate(cfg.probes):
        gv = grid.value_at(x, t)
        for name in strategies:
            strat = make_strategy(name, grid, cfg.params.n, sec.get("direction"))
            est, batch = estimate_value(x, t, strat, cfg.payoff, cfg.params, cfg.domain,
                                        cfg.samples, cfg.seed + 1000 * i, return_batch=True)
            violations += int(np.sum(batch.tau > bound))
            eta = direction_gap(grid, x, t) if name == "greedy" else 0.0
            if name == "greedy":
                ok = abs(est.mean - gv) <= est.confidence_radius + tol
            else:
                ok = est.mean <= gv + est.confidence_radius
            rows.append(ProbeComparison(x.tolist(), t, name, gv, est.mean, est.std_error,
                                        est.confidence_radius, eta, int(batch.tau.max()), bool(ok)))
    return GameVsDppReport(rows, tol, bound, violations)
