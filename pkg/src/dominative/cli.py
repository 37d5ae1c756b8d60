"""Command line entry point.

Exit status: 0 on success, 1 when a checked property fails, 2 on bad
configuration or usage.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .dpp import check_comparison, dpp_residual, solve_dpp
from .game import (OUTCOME_NAMES, StoppingBoundViolation, estimate_value, sample_steps,
                   stopping_bound)
from .harness import (RunManifest, make_strategy, run_convergence, run_game_vs_dpp,
                      write_csv, write_json)
from .model import ParameterDomainError
from .operators import QuadratureConfig, mean_value_residual
from .reference import (REFERENCE_IDS, BarrierFunction, barrier_dominative, barrier_drift_check,
                        make_reference)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class CheckFailed(Exception):
    pass


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# subcommands

def cmd_solve(args, cfg: ExperimentConfig, man: RunManifest) -> None:
    out = _out(args)
    start = time.perf_counter()
    grid = solve_dpp(cfg.domain, cfg.payoff, cfg.params, cfg.grid)
    man.stage_seconds["solve"] = time.perf_counter() - start
    res = dpp_residual(grid)
    nodes = grid.nodes().reshape(-1, cfg.params.n)
    levels = range(len(grid.times)) if args.levels == "all" else [len(grid.times) - 1]
    n = cfg.params.n

    def rows():
        for li in levels:
            vals = grid.values[li].ravel()
            for node, v in zip(nodes, vals):
                yield (li - 1, grid.times[li], *node, v)

    man.add(write_csv(out / "grid.csv", ["level", "t"] + [f"x{d + 1}" for d in range(n)] + ["value"],
                      rows()))
    summary = {"params": {"n": n, "p": cfg.params.p, "epsilon": cfg.params.epsilon,
                          "scaling": cfg.params.scaling, "alpha": cfg.params.alpha,
                          "beta": cfg.params.beta, "time_step": cfg.params.time_step},
               "grid": {"h": grid.h, "shape": list(grid.values.shape[1:]), "levels": grid.J + 2,
                        "directions": len(grid.stencil.directions)},
               "residual": {"max_abs": res.max_abs_residual, "node": list(res.argmax_node),
                            "level": res.argmax_level},
               "min_value": float(grid.values.min()), "max_value": float(grid.values.max())}
    ok = res.max_abs_residual <= 1e-10
    if getattr(cfg.payoff, "kind", None) in REFERENCE_IDS:
        node_pts = grid.nodes()
        err = max(float(np.max(np.abs(grid.values[k] - cfg.payoff(node_pts, t))[grid.interior]))
                  for k, t in enumerate(grid.times))
        summary["max_error_vs_reference"] = err
        summary["error_over_h2"] = err / grid.h**2
    if args.compare_config:
        other = load_config(args.compare_config)
        cmp = check_comparison(cfg.domain, cfg.payoff, other.payoff, cfg.params, cfg.grid)
        summary["comparison"] = {"ok": cmp.ok, "max_violation": cmp.max_violation}
        ok = ok and cmp.ok
    man.add(write_json(out / "solve_summary.json", summary))
    if not ok:
        raise CheckFailed("solver self-consistency or comparison check failed")


def cmd_simulate(args, cfg: ExperimentConfig, man: RunManifest) -> None:
    out = _out(args)
    seed = cfg.seed if args.seed is None else args.seed
    samples = cfg.samples if args.samples is None else args.samples
    man.seed = seed
    n = cfg.params.n
    if args.start is None:
        if not cfg.probes:
            raise ConfigError("give --start x1,...,xn,t or probes in the config")
        x0, t0 = cfg.probes[0]
    else:
        vals = args.start
        if len(vals) != n + 1:
            raise ConfigError(f"--start needs {n + 1} numbers")
        x0, t0 = np.array(vals[:n]), vals[n]
    if args.one_step:
        sigma = np.zeros(n)
        sigma[0] = 1.0
        if args.direction:
            sigma = np.asarray(args.direction, float)
            sigma /= np.linalg.norm(sigma)
        disp, outcome = sample_steps(x0, sigma, cfg.params, samples, seed)
        sq = np.sum(disp**2, axis=1)
        man.add(write_csv(out / "steps.csv",
                          ["sample"] + [f"dx{d + 1}" for d in range(n)] + ["outcome"],
                          ((i, *d, OUTCOME_NAMES[o]) for i, (d, o) in enumerate(zip(disp, outcome)))))
        p = cfg.params
        expected_sq = p.alpha * p.epsilon**2 + p.beta * p.epsilon**2 * n / (n + 2)
        se_mean = disp.std(axis=0, ddof=1) / np.sqrt(samples)
        se_sq = sq.std(ddof=1) / np.sqrt(samples)
        mean_ok = bool(np.all(np.abs(disp.mean(axis=0)) <= 4 * se_mean))
        sq_ok = bool(abs(sq.mean() - expected_sq) <= 4 * se_sq)
        freq = [float(np.mean(outcome == k)) for k in range(3)]
        man.add(write_json(out / "summary.json", {
            "samples": samples, "seed": seed, "mean_displacement": disp.mean(axis=0),
            "se_mean_displacement": se_mean, "mean_square_displacement": float(sq.mean()),
            "expected_square_displacement": expected_sq, "se_square_displacement": float(se_sq),
            "outcome_frequencies": dict(zip(OUTCOME_NAMES, freq)),
            "mean_ok": mean_ok, "square_ok": sq_ok}))
        if not (mean_ok and sq_ok):
            raise CheckFailed("one-step moments outside 4 standard errors")
        return
    grid = solve_dpp(cfg.domain, cfg.payoff, cfg.params, cfg.grid) if args.strategy == "greedy" else None
    strat = make_strategy(args.strategy, grid, n, args.direction)
    start = time.perf_counter()
    est, batch = estimate_value(x0, t0, strat, cfg.payoff, cfg.params, cfg.domain, samples, seed,
                                return_batch=True)
    man.stage_seconds["simulate"] = time.perf_counter() - start
    man.add(write_csv(out / "samples.csv",
                      ["sample", "tau"] + [f"exit_x{d + 1}" for d in range(n)] + ["exit_t", "payoff"],
                      ((i, int(batch.tau[i]), *batch.exit_x[i], batch.exit_t[i], batch.payoff[i])
                       for i in range(samples))))
    man.add(write_json(out / "summary.json", {
        "mean": est.mean, "std_error": est.std_error, "confidence_radius": est.confidence_radius,
        "num_samples": est.num_samples, "strategy": strat.kind, "seed": seed,
        "start": list(x0) + [t0], "max_tau": int(batch.tau.max()),
        "stopping_bound": stopping_bound(cfg.domain, cfg.params)}))


def cmd_amvf(args, cfg: ExperimentConfig, man: RunManifest) -> None:
    out = _out(args)
    sec = cfg.section("amvf")
    ref_id = sec.get("reference", "cosh_exp")
    x = np.asarray(sec.get("point", [0.0] * cfg.params.n), float)
    t = float(sec.get("t", cfg.domain.T / 2))
    eps_list = [float(e) for e in sec.get("epsilons", cfg.epsilons or [cfg.params.epsilon])]
    quad = QuadratureConfig(cells=int(sec.get("cells", 21)), n_dir=sec.get("n_dir"))
    rows = []
    for eps in eps_list:
        params = cfg.params.with_epsilon(eps)
        sol = make_reference(ref_id, params, **sec.get("reference_args", {}))
        rep = mean_value_residual(sol, x, t, params, quad)
        rows.append((eps, rep.lhs, rep.predicted, rep.residual))
    man.add(write_csv(out / "amvf.csv", ["epsilon", "lhs", "predicted", "residual"], rows))
    scaled = [abs(r[3]) / r[0] ** 2 for r in rows]
    ok = all(b <= a * 1.2 for a, b in zip(scaled, scaled[1:]))
    man.add(write_json(out / "amvf_summary.json", {"reference": ref_id, "point": x, "t": t,
                                                   "scaled_residuals": scaled, "decreasing": ok}))
    if not ok:
        raise CheckFailed("|residual|/eps^2 does not decrease")


def cmd_converge(args, cfg: ExperimentConfig, man: RunManifest) -> None:
    out = _out(args)
    start = time.perf_counter()
    study = run_convergence(cfg)
    man.stage_seconds["converge"] = time.perf_counter() - start
    man.add(write_csv(out / "convergence.csv", ["epsilon", "h", "sup_error", "seconds"], study.rows()))
    ok = study.exact or (study.monotone(1.2) and study.rate is not None and study.rate > 0)
    man.add(write_json(out / "convergence_summary.json", {
        "reference": study.reference, "errors": study.errors,
        "rate": "exact" if study.exact else study.rate,
        "monotone": study.monotone(1.2), "passed": ok}))
    if not ok:
        raise CheckFailed("errors do not decrease along the eps sequence")


def cmd_compare(args, cfg: ExperimentConfig, man: RunManifest) -> None:
    out = _out(args)
    if args.samples is not None:
        cfg.samples = args.samples
    if args.seed is not None:
        cfg.seed = args.seed
    man.seed = cfg.seed
    tol = cfg.section("compare").get("tolerance")
    start = time.perf_counter()
    rep = run_game_vs_dpp(cfg, tolerance=tol)
    man.stage_seconds["compare"] = time.perf_counter() - start
    n = cfg.params.n
    man.add(write_csv(out / "compare.csv",
                      ["probe"] + [f"x{d + 1}" for d in range(n)]
                      + ["t", "strategy", "grid_value", "mc_mean", "std_error", "confidence_radius",
                         "discrepancy", "eta", "max_tau", "passed"],
                      ((i // 2, *r.x, r.t, r.strategy, r.grid_value, r.mean, r.std_error,
                        r.confidence_radius, r.discrepancy, r.eta, r.max_tau, r.passed)
                       for i, r in enumerate(rep.rows))))
    man.add(write_json(out / "compare_summary.json", {
        "passed": rep.passed, "tolerance": rep.tolerance, "stopping_bound": rep.stopping_bound,
        "bound_violations": rep.bound_violations,
        "max_standardized_greedy": rep.max_standardized("greedy")}))
    if not rep.passed:
        raise CheckFailed("game values disagree with the grid")


def cmd_barrier(args, cfg: ExperimentConfig, man: RunManifest) -> None:
    out = _out(args)
    sec = cfg.section("barrier")
    n, p = cfg.params.n, cfg.params.p
    z = np.asarray(sec.get("z", [1.25] + [0.0] * (n - 1)), float)
    w = BarrierFunction(tuple(z), float(sec.get("delta", 0.25)), float(sec.get("R", 2.25)), n, p,
                        bool(sec.get("quadratic_only", False)))
    radii = sec.get("radii", [1.5 * w.delta, 0.5 * (w.delta + w.R)])
    direction = np.zeros(n)
    direction[0] = -1.0
    probes = [z + r * direction for r in radii]
    rep = barrier_drift_check(w, cfg.params, probes, m=int(sec.get("m", 100_000)), seed=cfg.seed)
    target = -2 * w.a * (n + p - 2)
    rows = []
    for x, inc, ci, q in zip(probes, rep.increments, rep.ci, rep.quadrature_increments):
        dp = barrier_dominative(w, x, cfg.params)
        rows.append((float(np.linalg.norm(x - z)), *x, dp, inc, ci, q, inc <= rep.threshold + ci))
    man.add(write_csv(out / "barrier.csv",
                      ["radius"] + [f"x{d + 1}" for d in range(n)]
                      + ["dominative", "increment", "ci", "quadrature_increment", "passed"], rows))
    dom_ok = all(abs(r[n + 1] - target) <= 1e-9 * abs(target) for r in rows)
    bc_ok = abs(float(w.radial(w.delta))) <= 1e-8 and abs(float(w.radial_derivative(w.R))) <= 1e-8
    man.add(write_json(out / "barrier_summary.json", {
        "a": w.a, "b": w.b, "c": w.c, "xi": w.xi, "target_dominative": target,
        "w_at_delta": float(w.radial(w.delta)), "dw_at_R": float(w.radial_derivative(w.R)),
        "drift_passed": rep.passed, "dominative_ok": dom_ok, "boundary_ok": bc_ok}))
    if not (rep.passed and dom_ok and bc_ok):
        raise CheckFailed("barrier identities or drift check failed")


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "amvf-check": cmd_amvf,
    "converge": cmd_converge,
    "compare": cmd_compare,
    "barrier-check": cmd_barrier,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dominative",
                                     description="Grid solver and game simulator for the "
                                                 "parabolic dominative p-Laplace equation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment JSON")
        p.add_argument("--out", default="out", help="output directory")
        return p

    p = common(sub.add_parser("solve", help="solve the DPP on a grid"))
    p.add_argument("--levels", choices=["all", "last"], default="all")
    p.add_argument("--compare-config", help="second config whose payoff must lie below")

    p = common(sub.add_parser("simulate", help="play the game by Monte Carlo"))
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", choices=["greedy", "fixed", "random"], default="greedy")
    p.add_argument("--direction", type=_floats)
    p.add_argument("--start", type=_floats, help="x1,...,xn,t")
    p.add_argument("--one-step", action="store_true", help="sample single steps and check moments")

    common(sub.add_parser("amvf-check", help="mean value formula residuals"))
    common(sub.add_parser("converge", help="convergence study against a reference"))

    p = common(sub.add_parser("compare", help="game values against the grid"))
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)

    common(sub.add_parser("barrier-check", help="barrier identities and drift"))
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        man = RunManifest(args.command, cfg.config_hash, cfg.seed)
        COMMANDS[args.command](args, cfg, man)
        man.write(args.out)
    except (ConfigError, ParameterDomainError, ValueError) as exc:
        # remaining ValueErrors are rejected inputs (coarse grid, unordered payoffs, bad probes)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckFailed, StoppingBoundViolation, AssertionError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        try:
            man.write(args.out)
        except Exception:
            pass
        return EXIT_FAIL
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
