"""Command-line entry point.

Subcommands ``dgp``, ``estimate``, ``experiment`` and ``cv`` read a flat
``key = value`` config (see :mod:`sparsepor.config`). Exit codes: 0 success,
2 bad config or input, 3 numeric failure, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .core import (
    EstimatorConfig,
    InternalError,
    InvalidInputError,
    NumericError,
    TreatmentKind,
)
from .dgp import OutcomeNoise, PropensityProfile
from .harness import (
    ExperimentSpec,
    SweepPoint,
    build_nuisance,
    cross_validate_s,
    point_config,
    run_experiment,
    simulate,
    write_report,
)
from .io import read_dataset, write_dataset, write_kv
from .pipeline import fit

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INTERNAL = 0, 2, 3, 4


def experiment_spec(cfg: RunConfig, seed: int, sweep=None) -> ExperimentSpec:
    """Translate config values into an :class:`ExperimentSpec`."""
    noise = (OutcomeNoise.bernoulli() if cfg["dgp.noise"] == "bernoulli"
             else OutcomeNoise.gaussian(cfg["dgp.sigma"]))
    prop = (PropensityProfile.near(cfg["dgp.c"], cfg["dgp.C"]) if cfg["dgp.propensity"] == "near"
            else PropensityProfile())
    psi0_mode = cfg["estimator.psi0"]
    est = EstimatorConfig(cfg["estimator.method"], cfg["estimator.budget"],
                          cfg["estimator.solver_tol"], cfg["estimator.max_iters"],
                          cfg["estimator.subset_mode"])
    if sweep is None:
        sweep = (SweepPoint(cfg["dgp.n"], cfg["dgp.k"], cfg["dgp.s"]),)
    psi0 = cfg["dgp.psi0"]
    if psi0_mode not in ("known", "estimated"):
        try:
            float(psi0_mode)
        except ValueError as exc:
            raise InvalidInputError("estimator.psi0 must be 'known', 'estimated' or a number") \
                from exc
    return ExperimentSpec(
        sweep=tuple(sweep), replications=cfg["experiment.replications"], base_seed=seed,
        kind=TreatmentKind(cfg["dgp.kind"]), design=cfg["dgp.design"], target=cfg["dgp.target"],
        amplitude=cfg["dgp.amplitude"], psi0=psi0, target_seed=cfg["dgp.target_seed"],
        d=cfg["dgp.d"], propensity=prop, noise=noise, confounding=cfg["dgp.confounding"],
        covariates=cfg["dgp.covariates"], split_ratio=cfg["dgp.split_ratio"],
        epsilon=cfg["dgp.epsilon"], nuisance=cfg["nuisance.mode"], delta=cfg["nuisance.delta"],
        eps=cfg["nuisance.eps"], floor=cfg["nuisance.floor"], fallback=cfg["nuisance.fallback"],
        estimator=est, budget_rule=cfg["estimator.budget_rule"],
        psi0_known=psi0_mode != "estimated", psi=cfg["dgp.psi"])


def _psi0_for(cfg: RunConfig, truth) -> float | None:
    mode = cfg["estimator.psi0"]
    if mode == "estimated":
        return None
    if mode == "known":
        return truth.target.psi0 if truth is not None else cfg["dgp.psi0"]
    return float(mode)


def cmd_dgp(cfg: RunConfig, seed: int, out: str) -> int:
    spec = experiment_spec(cfg, seed)
    dataset, truth = simulate(spec, spec.sweep[0], seed)
    os.makedirs(out, exist_ok=True)
    write_dataset(os.path.join(out, "data.csv"), dataset)
    t = truth.target
    write_kv(os.path.join(out, "truth.txt"), {
        "psi0": t.psi0, "psi": t.psi, "sparsity_norm": t.sparsity_norm, "s": float(t.s),
        "kind": dataset.spec.kind, "k": dataset.spec.k, "n": dataset.n, "d": dataset.d,
        "design": spec.design, "propensity": spec.propensity.kind, "c": spec.propensity.c,
        "C": spec.propensity.C, "noise": spec.noise.kind, "sigma": spec.noise.sigma,
        "confounding": spec.confounding, "covariates": spec.covariates,
        "split_ratio": spec.split_ratio, "seed": seed,
        "level_probabilities": (truth.level_probabilities() if dataset.spec.is_single
                                else truth.base),
    })
    return EXIT_OK


def _load_dataset(cfg: RunConfig, spec: ExperimentSpec, seed: int, path: str | None):
    """Dataset from ``path``/``data.path`` if given, else simulated; plus the design truth."""
    path = path or cfg["data.path"] or None
    pt = spec.sweep[0]
    if path is None:
        return simulate(spec, pt, seed)
    dataset = read_dataset(path, cfg["dgp.k"] if cfg.explicit("dgp.k") else None)
    if dataset.spec.kind is not spec.kind:
        raise InvalidInputError("dataset treatment columns do not match dgp.kind")
    truth = None
    if spec.nuisance.value != "empirical" or spec.budget_rule == "oracle" \
            or cfg["estimator.psi0"] == "known":
        # the design truth is rebuilt from the dgp section and the seed
        _, truth = simulate(spec, SweepPoint(max(dataset.n, 2), dataset.spec.k, pt.s), seed)
    return dataset, truth


def cmd_estimate(cfg: RunConfig, seed: int, out: str, path: str | None) -> int:
    spec = experiment_spec(cfg, seed)
    dataset, truth = _load_dataset(cfg, spec, seed, path)
    model = build_nuisance(spec, dataset, truth)
    est_cfg = point_config(spec, truth.target) if truth is not None else spec.estimator
    est = fit(dataset, model, est_cfg, _psi0_for(cfg, truth))
    if not np.all(np.isfinite(est.psi_hat)):
        raise NumericError("solver produced non-finite estimates")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "estimates.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "psi_hat"])
        for j, v in enumerate(est.psi_hat, 1):
            w.writerow([j, repr(float(v))])
    sol = est.solution
    write_kv(os.path.join(out, "diagnostics.txt"), {
        "method": est_cfg.method, "budget": float(est_cfg.budget), "psi0": est.psi0,
        "objective": sol.objective, "iterations": sol.iterations, "kkt": sol.kkt,
        "converged": sol.converged, "exact": sol.exact, "heuristic": sol.heuristic,
        "n": dataset.n, "k": dataset.spec.k,
    })
    return EXIT_OK


def cmd_experiment(cfg: RunConfig, seed: int, out: str, threads: int) -> int:
    ns = cfg["experiment.n"] or (cfg["dgp.n"],)
    ks = cfg["experiment.k"] or (cfg["dgp.k"],)
    ss = cfg["experiment.s"] or (cfg["dgp.s"],)
    sweep = [SweepPoint(n, k, s) for k in ks for s in ss for n in ns]
    base = cfg["experiment.base_seed"]
    spec = experiment_spec(cfg, seed if base is None else base, sweep)
    report = run_experiment(spec, threads)
    write_report(report, out)
    for rec in report.records:
        if rec.status != "ok":
            print(f"replication {rec.point}/{rec.rep} failed: {rec.error}", file=sys.stderr)
    return EXIT_NUMERIC if report.all_failed else EXIT_OK


def cmd_cv(cfg: RunConfig, seed: int, out: str, path: str | None) -> int:
    spec = experiment_spec(cfg, seed)
    dataset, truth = _load_dataset(cfg, spec, seed, path)
    model = build_nuisance(spec, dataset, truth)
    cands = cfg["cv.candidates"]
    if not cands:
        raise InvalidInputError("cv.candidates must list at least one budget")
    psi0 = _psi0_for(cfg, truth)
    if psi0 is None:
        raise InvalidInputError("cv needs a known or numeric estimator.psi0")
    res = cross_validate_s(dataset, model, cands, psi0, spec.estimator, cfg["cv.folds"])
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "cv.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["budget", "heldout_risk"])
        for c, r in zip(res.candidates, res.curve):
            w.writerow([repr(c), repr(r)])
    write_kv(os.path.join(out, "cv_choice.txt"), {"chosen": res.chosen, "folds": cfg["cv.folds"]})
    return EXIT_OK


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", metavar="PATH", default=default(None),
                        help="flat key = value config file")
    parser.add_argument("--set", metavar="K=V", action="append", dest="overrides",
                        default=default(None), help="override a config key (repeatable)")
    parser.add_argument("--seed", type=int, default=default(0), help="random seed")
    parser.add_argument("--threads", type=int, default=default(1), help="worker processes")
    parser.add_argument("--out", metavar="DIR", default=default("out"), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsepor", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("dgp", "simulate a dataset and its truth file"),
                       ("estimate", "fit the sparse estimator on a dataset"),
                       ("experiment", "run a Monte Carlo sweep"),
                       ("cv", "choose the budget by cross-validation")):
        p = sub.add_parser(name, help=text)
        _common(p, suppress=True)
        if name in ("estimate", "cv"):
            p.add_argument("dataset", nargs="?", help="dataset CSV (default: simulate)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        if args.threads < 1:
            raise InvalidInputError("--threads must be >= 1")
        cfg = load_config(args.config, args.overrides)
        if args.command == "dgp":
            return cmd_dgp(cfg, args.seed, args.out)
        if args.command == "estimate":
            return cmd_estimate(cfg, args.seed, args.out, args.dataset)
        if args.command == "experiment":
            return cmd_experiment(cfg, args.seed, args.out, args.threads)
        return cmd_cv(cfg, args.seed, args.out, args.dataset)
    except (InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the documented exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
