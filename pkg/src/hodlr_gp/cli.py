"""Command-line harness: ``hodlr-gp <subcommand> [flags]``.

Every subcommand prints an aligned table and, with ``--out DIR``, writes
``DIR/<name>.csv`` and ``DIR/<name>.json``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments as ex
from .dense_ref import DenseSizeError
from .hodlr import DEFAULT_EPS, DEFAULT_P_MAX, FactorizationError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2

SUBCOMMANDS = ("bench", "scaling", "highdim", "rmse-sweep", "predict", "loglik-scan", "solve")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; that code is reserved for numerical failure
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--kernel", default="gaussian",
                   help="gaussian, exponential, multiquadric, inverse-multiquadric, "
                        "biharmonic, matern, rational-quadratic or zero")
    g.add_argument("--noise", type=float, default=None,
                   help="noise variance on the diagonal (default depends on the kernel)")
    g.add_argument("--length-scale", type=float)
    g.add_argument("--amplitude", type=float)
    g.add_argument("--nu", type=float, help="Matérn smoothness")
    g.add_argument("--alpha", type=float, help="rational-quadratic exponent")
    g.add_argument("--n", type=_ints, default=None, help="problem size(s), e.g. '1024,2048'")
    g.add_argument("--dim", type=int, default=1)
    g.add_argument("--eps", type=float, default=DEFAULT_EPS)
    g.add_argument("--pmax", type=int, default=DEFAULT_P_MAX)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--engine", choices=("hodlr", "dense"), default="hodlr")
    g.add_argument("--dense-backend", choices=("naive", "lapack"), default="naive")
    g.add_argument("--repeats", type=int, default=None,
                   help="timing repetitions (default: 3 up to n=1e5, else 1)")
    g.add_argument("--points-csv", help="points file, one point per row, no header")
    g.add_argument("--out", help="directory for CSV and JSON output")
    g.add_argument("--quiet", action="store_true", help="do not print the table")

    parser = _Parser(prog="hodlr-gp", description="Fast direct solver experiments for kernel matrices.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("bench", parents=[common], help="timing table over --n")
    sub.add_parser("scaling", parents=[common], help="bench plus log-log slopes")
    p = sub.add_parser("highdim", parents=[common], help="fixed n over a list of dimensions")
    p.add_argument("--dims", type=_ints, default=[1, 2, 4, 8, 16, 32, 64])
    p.add_argument("--box", choices=("unit", "scaled", "both"), default="both")
    p = sub.add_parser("rmse-sweep", parents=[common], help="regression RMSE against eps")
    p.add_argument("--eps-list", type=_floats, default=[1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12])
    p = sub.add_parser("predict", parents=[common], help="GP predictive mean and variance")
    p.add_argument("--targets-csv")
    p.add_argument("--query-csv")
    p = sub.add_parser("loglik-scan", parents=[common], help="log-likelihood over a parameter grid")
    p.add_argument("--targets-csv")
    p.add_argument("--param", default="length_scale")
    p.add_argument("--grid", type=_floats, required=True)
    p = sub.add_parser("solve", parents=[common], help="solve one system")
    p.add_argument("--rhs-csv")
    return parser


def config_from_args(args: argparse.Namespace) -> ex.ExperimentConfig:
    params = {k: getattr(args, k) for k in ("length_scale", "amplitude", "nu", "alpha")
              if getattr(args, k) is not None}
    defaults = {"highdim": [5000], "rmse-sweep": [ex.RMSE_N], "predict": [512],
                "loglik-scan": [512], "solve": [1024]}
    n_list = args.n or defaults.get(args.command, [1024])
    kw = {}
    if args.command == "highdim":
        kw["dims"] = args.dims
    if args.command == "rmse-sweep":
        kw["eps_list"] = args.eps_list
    return ex.ExperimentConfig(
        kernel=args.kernel, params=params, noise=args.noise, n_list=n_list, dim=args.dim,
        eps=args.eps, p_max=args.pmax, seed=args.seed, engine=args.engine,
        dense_backend=args.dense_backend, repeats=args.repeats, points_csv=args.points_csv, **kw)


def run(args: argparse.Namespace) -> ex.ExperimentResult:
    cfg = config_from_args(args)
    cfg.kernel_spec()  # surface kernel errors before any work
    cmd = args.command
    if cmd == "bench":
        return ex.cmd_bench(cfg)
    if cmd == "scaling":
        return ex.cmd_scaling(cfg)
    if cmd == "highdim":
        boxes = ("unit", "scaled") if args.box == "both" else (args.box,)
        return ex.cmd_highdim(cfg, boxes)
    if cmd == "rmse-sweep":
        return ex.cmd_rmse_sweep(cfg)
    if cmd == "predict":
        return ex.cmd_predict(cfg, args.targets_csv, args.query_csv)
    if cmd == "loglik-scan":
        return ex.cmd_loglik_scan(cfg, args.param, args.grid, args.targets_csv)
    return ex.cmd_solve(cfg, args.rhs_csv)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"hodlr-gp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(args)
    except (FactorizationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"hodlr-gp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, DenseSizeError) as exc:
        print(f"hodlr-gp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        print(ex.format_table(result))
        if "slopes" in result.summary:
            for col, s in result.summary["slopes"].items():
                print(f"slope {col}: {s:.3f}")
    if args.out:
        try:
            paths = ex.write_outputs(result, args.out)
        except OSError as exc:
            print(f"hodlr-gp: error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not args.quiet:
            print(f"wrote {paths['csv']} and {paths['json']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
