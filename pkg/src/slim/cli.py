"""Command-line entry point: ``slim {gen,fit,predict,experiment,check}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence under
``--strict`` or a failed check suite.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .cpav import BackfitConfig
from .dantzig import SolverConfig
from .experiment import ExperimentConfig, read_metrics, resolve_workers, run_experiment
from .pipeline import SlimModel, default_gamma_grid, fit, tune_gamma
from .rank_corr import rank_correlation
from .synth import GeneratorConfig, TransformKind, gen_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAIL = 0, 1, 2, 3
FULL_P, FULL_TRIALS = 500, 100

log = logging.getLogger("slim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route it to the usage code
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _int_list(text):
    try:
        vals = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings to stderr")
    ap = _Parser(prog="slim", description="Sparse linear isotonic models.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic dataset with its ground truth")
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--p", type=_positive_int, default=500)
    g.add_argument("--s", type=_positive_int, default=10)
    g.add_argument("--noise-variance", type=float, default=0.25)
    g.add_argument("--transform", type=int, choices=[int(k) for k in TransformKind],
                   help="use one inverse link (1-10) for every feature")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--include-sigma", action="store_true", help="keep Sigma in truth.json for any p")
    g.add_argument("--out", required=True, help="output directory")

    f = sub.add_parser("fit", parents=[common], help="fit a model from CSV files")
    f.add_argument("--x", required=True)
    f.add_argument("--y", required=True)
    f.add_argument("--gamma", type=float, help="constraint level; tuned on a held-out split if omitted")
    f.add_argument("--gamma-count", type=_positive_int, default=10)
    f.add_argument("--holdout", type=float, default=0.2)
    f.add_argument("--rounds", type=_positive_int, default=100)
    f.add_argument("--max-iterations", type=_positive_int, default=5000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--strict", action="store_true", help="exit 3 when the LP solver does not converge")
    f.add_argument("--out", required=True)

    p = sub.add_parser("predict", parents=[common], help="apply a model to a CSV design")
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--out", help="CSV path for predictions (default: stdout)")

    e = sub.add_parser("experiment", parents=[common], help="sample-size sweep against the linear baseline")
    e.add_argument("--n-grid", type=_int_list, default=(100, 200, 300, 400, 500))
    e.add_argument("--trials", type=_positive_int)
    e.add_argument("--p", type=_positive_int)
    e.add_argument("--s", type=_positive_int, default=5)
    e.add_argument("--gamma-count", type=_positive_int, default=10)
    e.add_argument("--n-test", type=_positive_int, default=200)
    e.add_argument("--design-norm", choices=["fro", "spectral"], default="fro")
    e.add_argument("--paper-scale", action="store_true", help=f"p={FULL_P}, trials={FULL_TRIALS}, s=10")
    e.add_argument("--no-runtime", action="store_true", help="write 0 for runtime_seconds (byte-stable output)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--workers", type=_positive_int, default=1, help="overridden by SLIM_WORKERS")
    e.add_argument("--strict", action="store_true", help="exit 3 if a tuned fit did not converge")
    e.add_argument("--out", default="results")

    c = sub.add_parser("check", parents=[common], help="run the oracle suites")
    c.add_argument("--seed", type=int, default=0)
    return ap


def _read_xy(args):
    X, _ = io.read_matrix(args.x)
    y = io.read_vector(args.y)
    if X.shape[0] != y.shape[0]:
        raise io.DataError(f"{args.x} has {X.shape[0]} rows but {args.y} has {y.shape[0]}")
    if X.shape[0] < 2:
        raise io.DataError("need at least 2 samples")
    return X, y


def cmd_gen(args) -> int:
    if args.s > args.p:
        raise UsageError(f"--s ({args.s}) cannot exceed --p ({args.p})")
    cfg = GeneratorConfig(
        n=args.n, p=args.p, s=args.s, noise_variance=args.noise_variance, rng_seed=args.seed,
        transforms=args.transform,
    )
    X, y, truth = gen_dataset(cfg)
    out = Path(args.out)
    io.write_matrix(out / "X.csv", X)
    io.write_vector(out / "y.csv", y)
    io.write_truth(out / "truth.json", truth, include_sigma=True if args.include_sigma else None)
    print(f"wrote {out / 'X.csv'}, {out / 'y.csv'}, {out / 'truth.json'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    X, y = _read_xy(args)
    solver = SolverConfig(max_iterations=args.max_iterations)
    backfit = BackfitConfig(rounds=args.rounds)
    gamma = args.gamma
    if gamma is not None and (not np.isfinite(gamma) or gamma < 0):
        raise UsageError("--gamma must be a non-negative number")
    if np.std(y) == 0:
        raise io.DataError(f"{args.y}: response is constant")
    if gamma is None:
        grid = default_gamma_grid(rank_correlation(X, y).beta_hat, args.gamma_count)
        gamma, mse = tune_gamma(X, y, grid, solver, backfit, args.holdout, args.seed)
        log.info("tuned gamma %.6g (validation MSE %.6g)", gamma, float(np.min(mse)))
    model = fit(X, y, gamma, solver, backfit)
    model.save(args.out)
    meta = model.metadata
    print(
        f"support {model.support.tolist()} gamma {gamma:.6g} "
        f"solver {meta['solver_status']} rounds {meta.get('rounds', 0)}"
    )
    if args.strict and not meta["solver_converged"]:
        print(f"solver did not converge (status {meta['solver_status']})", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        model = SlimModel.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise io.DataError(f"{args.model}: {exc}") from None
    X, _ = io.read_matrix(args.x)
    if X.shape[1] != model.p:
        raise io.DataError(f"{args.x} has {X.shape[1]} columns, model expects {model.p}")
    y_hat = model.predict(X)
    if args.out:
        io.write_vector(args.out, y_hat, name="y_hat")
    else:
        sys.stdout.write("y_hat\n" + "".join(f"{v!r}\n" for v in y_hat.tolist()))
    return EXIT_OK


def cmd_experiment(args) -> int:
    p = args.p or (FULL_P if args.paper_scale else 100)
    trials = args.trials or (FULL_TRIALS if args.paper_scale else 20)
    s = 10 if args.paper_scale and args.s == 5 else args.s
    try:
        workers = resolve_workers(args.workers)
        cfg = ExperimentConfig(
            n_grid=args.n_grid, trials=trials, p=p, s=s, gamma_count=args.gamma_count,
            n_test=args.n_test, seed=args.seed, out_dir=args.out, workers=workers,
            design_norm=args.design_norm, record_runtime=not args.no_runtime,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    total = len(cfg.n_grid) * cfg.trials

    def progress(n, trial):
        log.info("done n=%d trial=%d (of %d cells)", n, trial, total)

    path = run_experiment(cfg, progress)
    print(f"wrote {path} and aggregates in {path.parent}")
    if args.strict:
        bad = [r for r in read_metrics(path) if r.selected and r.solver_status not in ("optimal", "tolerance")]
        if bad:
            print(f"{len(bad)} tuned fits did not converge", file=sys.stderr)
            return EXIT_FAIL
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_all

    results = run_all(seed=args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "experiment": cmd_experiment,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"slim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    # numba notes an outdated TBB and falls back to another threading layer
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"slim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.DataError as exc:
        print(f"slim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"slim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
