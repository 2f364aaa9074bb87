"""Command-line interface: simulate, fit, select-rank, experiment.

Every subcommand also reads ``--config FILE`` (a JSON object whose keys are
the long option names with dashes or underscores); explicit flags win.
Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import chains
from .dataio import FORMATS, DataError, load_count_matrix, load_mask
from .distributions import ParameterError, make_rng
from .experiment import METHODS, ExperimentConfig, run_experiment, select_rank
from .mapest.fit import ConfigurationError, FitConfig, NumericalFailure, fit
from .mapest.objective import SupportError
from .mapest.priors import HyperparameterError, make_prior

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# hyperparameter flags accepted per prior family
PRIOR_FLAGS = {
    "gap": ("alpha", "beta"),
    "rate": ("alpha", "beta"),
    "hier": ("alpha_z", "beta_z", "alpha_h", "beta_h"),
    "shape": ("alpha", "beta"),
    "bgar": ("alpha", "beta", "rho"),
}
CHAIN_FLAGS = {
    "rate": ("alpha", "beta"),
    "hier_rate": ("alpha_z", "beta_z", "alpha_h", "beta_h"),
    "shape": ("alpha", "beta"),
    "hier_shape": ("alpha", "beta"),
    "bgar": ("alpha", "beta", "rho"),
}
HYPER = ("alpha", "beta", "rho", "alpha_z", "beta_z", "alpha_h", "beta_h")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _methods(text: str) -> list[str]:
    vals = [t.strip() for t in text.split(",") if t.strip()]
    if vals == ["all"]:
        return list(METHODS)
    bad = [v for v in vals if v not in METHODS]
    if bad or not vals:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {bad or text!r}; valid names are {', '.join(METHODS)} (or 'all')")
    return vals


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values (flags override it)")
    p.add_argument("--seed", type=int, help="master random seed (default 0)")


def _add_hyper(p):
    for h in HYPER:
        p.add_argument(f"--{h.replace('_', '-')}", dest=h, type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tempnmf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate Gamma Markov chain traces to CSV")
    _add_common(p)
    p.add_argument("--chain", choices=sorted(CHAIN_FLAGS))
    _add_hyper(p)
    p.add_argument("--h1", type=float)
    p.add_argument("--n", type=int, help="chain length")
    p.add_argument("--replicas", type=int)
    p.add_argument("--out", help="output CSV (default stdout)")

    p = sub.add_parser("fit", help="MAP fit of one prior to a count matrix")
    _add_common(p)
    p.add_argument("data", nargs="?")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--header", action="store_const", const=True)
    p.add_argument("--prior", choices=sorted(PRIOR_FLAGS))
    _add_hyper(p)
    p.add_argument("-K", "--K", dest="K", type=int)
    p.add_argument("--mask", help="dense CSV of 0/1 entries (1 = observed)")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--likelihood", choices=("poisson", "exponential"))
    p.add_argument("--out", help="output JSON (default fit.json)")

    p = sub.add_parser("select-rank", help="choose K by held-out KL error")
    _add_common(p)
    p.add_argument("data", nargs="?")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--header", action="store_const", const=True)
    p.add_argument("--grid", type=_int_list, help="candidate ranks, e.g. 1,2,3,4")
    p.add_argument("--trials", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)

    p = sub.add_parser("experiment", help="run the prediction experiment")
    _add_common(p)
    p.add_argument("data", nargs="?")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--header", action="store_const", const=True)
    p.add_argument("--methods", type=_methods, help="comma list of gap,rate,hier,shape,bgar or 'all'")
    p.add_argument("-K", "--K", dest="K", type=int)
    p.add_argument("--splits", dest="n_splits", type=int)
    p.add_argument("--inits", dest="n_inits", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--threads", type=int, help="worker processes (results do not depend on it)")
    p.add_argument("--out", help="output directory (default results)")
    return parser


DEFAULTS = {
    "simulate": {"seed": 0, "h1": 1.0, "n": 50, "replicas": 10},
    "fit": {"seed": 0, "format": "dense-csv", "header": False, "prior": "gap", "K": 1,
            "tol": 1e-5, "max_iters": 1000, "likelihood": "poisson", "out": "fit.json"},
    "select-rank": {"seed": 0, "format": "dense-csv", "header": False, "grid": [1, 2, 3, 4],
                    "trials": 10, "tol": 1e-5, "max_iters": 1000},
    "experiment": {"seed": 0, "format": "dense-csv", "header": False, "methods": list(METHODS),
                   "K": None, "n_splits": 5, "n_inits": 5, "tol": 1e-5, "max_iters": 1000,
                   "threads": 1, "out": "results"},
}


def _merge(args) -> dict:
    """Defaults < config file < explicit flags."""
    opts = dict(DEFAULTS[args.command])
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in data.items():
            opts[k.replace("-", "_")] = v
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config"):
            opts[k] = v
    if isinstance(opts.get("methods"), str):
        opts["methods"] = _methods(opts["methods"])
    if isinstance(opts.get("grid"), str):
        opts["grid"] = _int_list(opts["grid"])
    return opts


def _need(opts, *names):
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


def _hyper(opts, names) -> dict:
    return {n: float(opts[n]) for n in names if opts.get(n) is not None}


def cmd_simulate(opts) -> int:
    _need(opts, "chain")
    names = CHAIN_FLAGS[opts["chain"]]
    _need(opts, *names)
    params = chains.make_params(opts["chain"], **_hyper(opts, names))
    if opts["replicas"] < 0:
        raise ParameterError("replicas must be non-negative")
    h1 = None if opts["chain"] == "bgar" else float(opts["h1"])
    h, aux = chains.simulate_batch(params, int(opts["n"]), int(opts["replicas"]), make_rng(opts["seed"]), h1)
    if opts.get("out"):
        with open(opts["out"], "w", newline="") as fh:
            chains.write_traces_csv(fh, h, aux)
    else:
        chains.write_traces_csv(sys.stdout, h, aux)
    return EXIT_OK


def _load(opts):
    _need(opts, "data")
    return load_count_matrix(opts["data"], opts["format"], bool(opts["header"]))


def cmd_fit(opts) -> int:
    V = _load(opts)
    family = opts["prior"]
    prior = make_prior(family, **_hyper(opts, PRIOR_FLAGS[family]))
    mask = load_mask(opts["mask"], V.shape) if opts.get("mask") else None
    cfg = FitConfig(K=int(opts["K"]), tol=float(opts["tol"]), max_iters=int(opts["max_iters"]),
                    seed=int(opts["seed"]), likelihood=opts["likelihood"])
    res = fit(V, prior, cfg, mask=mask)
    Path(opts["out"]).write_text(res.to_json())
    print(f"{family}: {res.iterations} iterations, converged={res.converged}, "
          f"objective={res.objective_trace[-1]:.6g} -> {opts['out']}")
    return EXIT_OK


def cmd_select_rank(opts) -> int:
    V = _load(opts)
    K = select_rank(V, opts["grid"], n_trials=int(opts["trials"]), seed=int(opts["seed"]),
                    tol=float(opts["tol"]), max_iters=int(opts["max_iters"]))
    print(K)
    return EXIT_OK


def cmd_experiment(opts) -> int:
    V = _load(opts)
    _need(opts, "K")
    cfg = ExperimentConfig(K=int(opts["K"]), n_splits=int(opts["n_splits"]), n_inits=int(opts["n_inits"]),
                           methods=tuple(opts["methods"]), seed=int(opts["seed"]), tol=float(opts["tol"]),
                           max_iters=int(opts["max_iters"]), threads=int(opts["threads"]))
    report = run_experiment(V, cfg)
    report.write(opts["out"])
    for m, metric, mean, std in report.rows():
        print(f"{m:6s} {metric}  {mean:.6g} +/- {std:.3g}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "select-rank": cmd_select_rank,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = _merge(args)
        return COMMANDS[args.command](opts)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, HyperparameterError, ConfigurationError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFailure, SupportError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
