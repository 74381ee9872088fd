"""Command-line front end: ``solve``, ``path`` and ``bench``.

Exit codes: 0 success, 2 when a solve stopped at the epoch budget without
reaching the gap tolerance, 64 for invalid flags, 65 for a degenerate
problem (for instance lambda_max = 0), 74 for unreadable or malformed
input and unwritable output.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .core import GapSafeError, GroupPartition
from .dataio import (
    DataFormatError, make_lasso, make_logistic, make_multinomial, make_multitask,
    read_csv, read_groups, read_libsvm, save_coefficients, standardize,
    write_results_csv,
)
from .losses import Logistic, MultiTaskQuadratic, Multinomial, Quadratic, lambda_max
from .path import PathConfig, WarmStart, make_grid, run_path
from .penalties import L1, L1L2, SparseGroupLasso
from .screening import RuleKind
from .solver import SolverConfig, solve

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_IOERR = 74

MODELS = {
    "lasso": ("regression", Quadratic),
    "logistic": ("binary", Logistic),
    "multitask": ("multitask", MultiTaskQuadratic),
    "multinomial": ("multiclass", Multinomial),
}
SYNTHETIC = {
    "regression": make_lasso, "binary": make_logistic,
    "multitask": make_multitask, "multiclass": make_multinomial,
}
DEFAULT_BUDGETS = tuple(2 ** k for k in range(1, 10))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")


def _add_common(p):
    data = p.add_argument_group("data")
    data.add_argument("--data", help="LIBSVM (.svm, .libsvm, .txt) or CSV (.csv) file; "
                      "omit for a synthetic problem")
    data.add_argument("--format", choices=("auto", "libsvm", "csv"), default="auto")
    data.add_argument("--n-targets", type=int, default=1,
                      help="label columns in a multitask CSV")
    data.add_argument("--standardize", action="store_true",
                      help="unit-norm columns; centred, unit-variance regression targets")
    data.add_argument("--n-samples", type=int, default=100)
    data.add_argument("--n-features", type=int, default=2000)
    data.add_argument("--n-outputs", type=int, default=3)
    data.add_argument("--support", type=float, default=0.05)
    data.add_argument("--snr", type=float, default=3.0)

    model = p.add_argument_group("model")
    model.add_argument("--model", choices=sorted(MODELS), default="lasso")
    model.add_argument("--penalty", choices=("l1", "l1l2", "sgl"), default=None,
                       help="default l1; l1l2 with groups or for multi-output models")
    model.add_argument("--tau", type=float, default=None,
                       help="Sparse-Group Lasso mixing in [0, 1]")
    model.add_argument("--groups", help="file with one group label per feature")
    model.add_argument("--group-size", type=int, help="contiguous groups of this size")
    model.add_argument("--weights", choices=("sqrt", "ones"), default="sqrt")

    run = p.add_argument_group("solver")
    run.add_argument("--rule", default="gap-dynamic",
                     choices=[r.value for r in RuleKind])
    run.add_argument("--eps", type=float, default=1e-6)
    run.add_argument("--no-scale-eps", action="store_true",
                     help="use --eps as an absolute gap tolerance")
    run.add_argument("--max-epochs", type=int, default=10_000)
    run.add_argument("--screen-every", type=int, default=10)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--shuffle", action="store_true")
    run.add_argument("-v", "--verbose", action="count", default=0)


def _add_grid(p):
    g = p.add_argument_group("grid")
    g.add_argument("--n-lambdas", type=int, default=100)
    g.add_argument("--delta", type=float, default=3.0, help="decades spanned by the grid")
    g.add_argument("--lambdas", type=_float_list, help="explicit decreasing list")


def build_parser():
    parser = _Parser(prog="gapsafe", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve at one lambda and print a JSON summary")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lambda-ratio", type=float, help="lambda / lambda_max")
    p.add_argument("--coef-out", help="write coefficients as CSV")

    p = sub.add_parser("path", help="solve along a lambda grid, write a results CSV")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--warm-start", choices=[w.value for w in WarmStart], default="plain")
    p.add_argument("--out", default="-", help="results CSV ('-' for stdout)")

    p = sub.add_parser("bench", help="active fraction per rule and epoch budget")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--budgets", type=_int_list, default=list(DEFAULT_BUDGETS))
    p.add_argument("--out", default="-", help="long-format CSV ('-' for stdout)")
    p.set_defaults(screen_every=1)
    # ``--rule all`` is only meaningful for bench
    for action in p._actions:
        if action.dest == "rule":
            action.choices = [r.value for r in RuleKind] + ["all"]
            action.default = "all"
    return parser


def _validate(args):
    if args.eps <= 0:
        raise UsageError("--eps must be positive")
    if args.max_epochs < 1 or args.screen_every < 1:
        raise UsageError("--max-epochs and --screen-every must be >= 1")
    if args.groups and args.group_size:
        raise UsageError("--groups and --group-size are exclusive")
    if args.group_size is not None and args.group_size < 1:
        raise UsageError("--group-size must be >= 1")
    multi = args.model in ("multitask", "multinomial")
    grouped = bool(args.groups or args.group_size)
    pen = args.penalty or ("l1l2" if grouped or multi else "l1")
    args.penalty = pen
    if pen == "sgl" and not grouped:
        raise UsageError("--penalty sgl needs --groups or --group-size")
    if pen == "l1l2" and not (grouped or multi):
        raise UsageError("--penalty l1l2 needs --groups or --group-size")
    if pen == "l1" and (args.groups or args.group_size):
        raise UsageError("--penalty l1 takes no groups")
    if args.tau is not None and pen != "sgl":
        raise UsageError("--tau applies to --penalty sgl only")
    if pen == "sgl":
        args.tau = 0.5 if args.tau is None else args.tau
        if not 0.0 <= args.tau <= 1.0:
            raise UsageError("--tau must lie in [0, 1]")
        if multi:
            raise UsageError("--penalty sgl is for single-output models")
    if args.rule in ("dst3", "sis") and args.model != "lasso":
        raise UsageError(f"--rule {args.rule} needs --model lasso")
    if args.command == "solve":
        if (args.lam is None) == (args.lambda_ratio is None):
            raise UsageError("give exactly one of --lambda and --lambda-ratio")
        if args.lam is not None and args.lam <= 0:
            raise UsageError("--lambda must be positive")
        if args.lambda_ratio is not None and args.lambda_ratio <= 0:
            raise UsageError("--lambda-ratio must be positive")
    else:
        if args.lambdas is not None:
            lams = np.asarray(args.lambdas)
            if lams.size == 0 or np.any(lams <= 0) or np.any(np.diff(lams) >= 0):
                raise UsageError("--lambdas must be positive and strictly decreasing")
        elif args.n_lambdas < 2 or args.delta <= 0:
            raise UsageError("--n-lambdas must be >= 2 and --delta positive")
    if args.command == "bench" and any(b < 1 for b in args.budgets):
        raise UsageError("--budgets must be positive")
    if args.n_targets < 1:
        raise UsageError("--n-targets must be >= 1")


def _load(args):
    task, _ = MODELS[args.model]
    if args.data is None:
        gen = SYNTHETIC[task]
        kw = dict(n=args.n_samples, p=args.n_features, seed=args.seed,
                  support_fraction=args.support)
        if task in ("regression", "multitask"):
            kw["snr"] = args.snr
        if task in ("multitask", "multiclass"):
            kw["q"] = args.n_outputs
        ds, _ = gen(**kw)
    else:
        if not os.path.isfile(args.data):
            raise FileNotFoundError(args.data)
        fmt = args.format
        if fmt == "auto":
            fmt = "csv" if args.data.lower().endswith(".csv") else "libsvm"
        if fmt == "csv":
            ds = read_csv(args.data, task=task, n_targets=args.n_targets)
        else:
            if task == "multitask":
                raise UsageError("multitask data must be CSV")
            ds = read_libsvm(args.data, task=task)
    if args.standardize:
        ds = standardize(ds)
    return ds


def _penalty(args, p):
    if args.penalty == "l1":
        return L1(p)
    if not (args.groups or args.group_size):
        # multi-output row sparsity: one group per feature row
        return L1L2(GroupPartition.singletons(p))
    if args.groups:
        labels = read_groups(args.groups, p)
        part = GroupPartition.from_labels(labels, "sqrt" if args.weights == "sqrt" else None)
    else:
        k = args.group_size
        sizes = [k] * (p // k) + ([p % k] if p % k else [])
        part = GroupPartition.contiguous(sizes, "sqrt" if args.weights == "sqrt" else None)
    if args.penalty == "l1l2":
        return L1L2(part)
    return SparseGroupLasso(part, args.tau)


def _solver_config(args, rule=None):
    return SolverConfig(eps=args.eps, max_epochs=args.max_epochs,
                        screen_every=args.screen_every,
                        rule=RuleKind(rule or args.rule), scale_eps=not args.no_scale_eps,
                        shuffle=args.shuffle, seed=args.seed)


def _problem(args):
    ds = _load(args)
    _, loss_cls = MODELS[args.model]
    model = loss_cls(ds.y)
    pen = _penalty(args, ds.n_features)
    return model, pen, ds.X


def cmd_solve(args):
    model, pen, X = _problem(args)
    lmax = lambda_max(model, pen, X)
    lam = args.lam if args.lam is not None else args.lambda_ratio * lmax
    res = solve(model, pen, X, lam, config=_solver_config(args))
    beta = res.beta.reshape(X.p, -1)
    summary = {
        "lambda": float(lam),
        "gap": float(res.gap),
        "epochs": int(res.epochs),
        "nnz": int(np.count_nonzero(np.any(beta != 0, axis=1))),
        "active_groups": res.active.n_groups,
        "converged": bool(res.converged),
        "lambda_max": float(lmax),
        "eps": float(res.eps),
        "primal": float(res.primal),
    }
    if args.coef_out:
        save_coefficients(args.coef_out, res.beta)
    print(json.dumps(summary))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _grid(args, lmax):
    if args.lambdas is not None:
        return np.asarray(args.lambdas)
    return make_grid(lmax, args.n_lambdas, args.delta)


def _open_out(path):
    return sys.stdout if path == "-" else open(path, "w", encoding="utf-8", newline="")


def cmd_path(args):
    model, pen, X = _problem(args)
    lmax = lambda_max(model, pen, X)
    cfg = PathConfig(lambdas=_grid(args, lmax), warm_start=args.warm_start,
                     solver=_solver_config(args))
    result = run_path(model, pen, X, cfg)
    fh = _open_out(args.out)
    try:
        write_results_csv(fh, result)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def bench_rules(args, model):
    if args.rule != "all":
        return [RuleKind(args.rule)]
    rules = [r for r in RuleKind]
    if not (isinstance(model, Quadratic) and model.y.ndim == 1):
        rules = [r for r in rules if r not in (RuleKind.DST3, RuleKind.SIS)]
    return rules


def run_bench(model, pen, X, rules, budgets, lambdas, base_cfg):
    """Rows ``(rule, epochs, lambda, active_fraction, wall_ms)``.

    Each cell is a cold start from 0 with a fixed epoch budget, so the
    active fraction reflects only the rule and the budget.
    """
    rows = []
    for rule in rules:
        for budget in budgets:
            cfg = replace(base_cfg, rule=rule, max_epochs=int(budget))
            for lam in lambdas:
                start = time.perf_counter()
                res = solve(model, pen, X, float(lam), config=cfg)
                ms = 1e3 * (time.perf_counter() - start)
                frac = res.active.n_features / X.p
                rows.append((rule.value, int(budget), float(lam), frac, ms))
    return rows


def cmd_bench(args):
    model, pen, X = _problem(args)
    lmax = lambda_max(model, pen, X)
    lambdas = _grid(args, lmax)
    rows = run_bench(model, pen, X, bench_rules(args, model), args.budgets, lambdas,
                     _solver_config(args, rule="none"))
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("rule", "epochs", "lambda", "active_fraction", "wall_ms"))
        for rule, budget, lam, frac, ms in rows:
            w.writerow((rule, budget, format(lam, ".17g"), format(frac, ".17g"),
                        format(ms, ".17g")))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "path": cmd_path, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gapsafe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataFormatError) as exc:
        print(f"gapsafe: {exc}", file=sys.stderr)
        return EXIT_IOERR
    except GapSafeError as exc:
        print(f"gapsafe: {exc}", file=sys.stderr)
        return EXIT_DATAERR


if __name__ == "__main__":
    sys.exit(main())
