"""Command-line interface.

Subcommands::

    test      run the projection pursuit test on a CSV data file
    simulate  reproduce the size/power studies at a chosen scale
    project   project a vector onto a null set

Exit codes: 0 success, 2 input error, 3 solver failure.
"""

import argparse
import csv
import json
import sys
from dataclasses import asdict

import numpy as np

from .exceptions import ContractError, InputError, SolverError
from .pptest import Dataset, TestConfig, run_pptest
from .precision import ClimeConfig
from .projection import describe, parse_null, project
from .simulate import run_study, write_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3


def read_numeric_csv(path):
    """Rows of floats from a comma-separated file with an optional header."""
    rows = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise InputError(f"{path}:{lineno}: non-numeric value") from None
            if rows and len(values) != len(rows[0]):
                raise InputError(
                    f"{path}:{lineno}: expected {len(rows[0])} columns, found {len(values)}"
                )
            if not all(np.isfinite(values)):
                raise InputError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def read_dataset(path):
    table = read_numeric_csv(path)
    if table.shape[1] < 2:
        raise InputError(f"{path}: need a response column and at least one feature")
    return Dataset(table[:, 0], table[:, 1:])


def read_q(path, p):
    if path is None:
        return None
    Q = read_numeric_csv(path)
    if Q.shape != (p, p):
        raise InputError(f"Q has shape {Q.shape[0]}x{Q.shape[1]}, expected {p}x{p}")
    return Q


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if np.isfinite(val) else None
    return obj


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def cmd_test(args):
    data = read_dataset(args.data)
    null_set = parse_null(args.null, read_q(args.q, data.p))
    clime = ClimeConfig(eta=args.eta, mu=args.mu, eta_const=args.eta_const, mu_const=args.mu_const)
    cfg = TestConfig(
        alpha=args.alpha,
        bootstrap=args.bootstrap,
        seed=args.seed,
        lambda0=args.lambda0,
        clime=clime,
        nodewise_eta=args.nodewise_eta,
        logistic_lambda=args.logistic_lambda,
    )
    result = run_pptest(data, args.model, null_set, cfg)
    config = {
        "data": args.data,
        "model": args.model,
        "null": describe(null_set),
        "q": args.q,
        "n": data.n,
        "p": data.p,
        **asdict(cfg),
    }
    _emit(_dump(result.to_dict(config)), args.out)
    return EXIT_OK


def cmd_simulate(args):
    models = tuple(args.models.split(","))
    for m in models:
        if m not in ("linear", "logistic"):
            raise InputError(f"unknown model {m!r}")
    cfg = TestConfig(bootstrap=args.bootstrap, clime=ClimeConfig(eta_const=args.eta_const))
    rows = run_study(
        args.study,
        p_list=args.p,
        rho_list=args.rho,
        reps=args.reps,
        bootstrap=args.bootstrap,
        seed=args.seed,
        models=models,
        n=args.n,
        workers=args.workers,
        test=cfg,
        log=lambda msg: print(msg, file=sys.stderr, flush=True),
    )
    config = {
        "study": args.study,
        "p": args.p,
        "rho": args.rho,
        "reps": args.reps,
        "n": args.n,
        "models": list(models),
        "seed": args.seed,
        "test": asdict(cfg),
    }
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            write_csv(rows, fh)
        with open(args.out + ".config.json", "w", encoding="utf-8") as fh:
            fh.write(_dump(config))
    else:
        write_csv(rows, sys.stdout)
        print(_dump(config), file=sys.stderr, end="")
    return EXIT_OK


def cmd_project(args):
    v = read_numeric_csv(args.vector).ravel()
    null_set = parse_null(args.null, read_q(args.q, v.size))
    proj = project(v, null_set)
    out = {
        "point": proj.point,
        "distance": proj.distance,
        "null_set": describe(null_set),
        "input": v,
    }
    _emit(_dump(out), args.out)
    return EXIT_OK


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="projpursuit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run the test on a data file")
    t.add_argument("--data", required=True, help="CSV: response first, then features")
    t.add_argument("--model", choices=("linear", "logistic"), required=True)
    t.add_argument("--null", required=True, help="l0:<s0> | betamin:<c> | l2ball:<c>")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--bootstrap", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default=None)
    t.add_argument("--q", default=None, help="CSV with the p x p matrix of an l2ball null")
    t.add_argument("--lambda0", type=float, default=None)
    t.add_argument("--eta", type=float, default=None)
    t.add_argument("--mu", type=float, default=None)
    t.add_argument("--eta-const", type=float, default=ClimeConfig.eta_const)
    t.add_argument("--mu-const", type=float, default=ClimeConfig.mu_const)
    t.add_argument("--nodewise-eta", type=float, default=None)
    t.add_argument("--logistic-lambda", type=float, default=None)
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="run a size or power study")
    s.add_argument("--study", required=True, help="table1 | table2")
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--bootstrap", type=int, default=1000)
    s.add_argument("--p", type=_int_list, default=None)
    s.add_argument("--rho", type=_float_list, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--models", default="linear,logistic")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--eta-const", type=float, default=ClimeConfig.eta_const)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("project", help="project a vector onto a null set")
    pr.add_argument("--vector", required=True)
    pr.add_argument("--null", required=True)
    pr.add_argument("--q", default=None)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_project)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
