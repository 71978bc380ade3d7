"""Command-line interface: ``spectral-mmd {test,simulate,power,bench}``.

Exit codes
----------
0  the command completed (for ``test``: the null was *not* rejected)
3  ``test`` completed and rejected the null
1  usage error: bad flag or value, missing file, malformed config
2  data or numerical error: malformed CSV, infeasible split, failed decomposition

Exit code 3 for a rejection lets shell pipelines branch on the decision while
keeping 0 for a run that found no difference.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from ._rng import PERMUTATION, SPLIT, derive_seed
from .bench import ConfigError, ExperimentConfig, run_power, run_timing, write_power_csv, write_timing_csv
from .data import GENERATORS, CSVFormatError, generate, load_csv, write_csv
from .kernels import parse_kernel_spec
from .permutation import PermutationPlan, adaptive_test
from .regularizers import RegFamily, parse_lambda_grid
from .statistics import NumericalError, split

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_REJECT = 3

SEED_ENV = "SPECTRAL_MMD_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_rff(tokens) -> tuple[int, int | None]:
    """Parse ``l=<int> [seed=<int>]`` (tokens may also be comma separated)."""
    text = " ".join(tokens).replace(",", " ")
    values = {}
    for item in text.split():
        key, sep, value = item.partition("=")
        if not sep or key not in ("l", "seed") or key in values:
            raise UsageError(f"--rff expects 'l=<int> seed=<int>', got {item!r}")
        try:
            values[key] = int(value)
        except ValueError:
            raise UsageError(f"--rff {key} must be an integer, got {value!r}") from None
    if "l" not in values:
        raise UsageError("--rff needs l=<int>")
    if values["l"] < 0:
        raise UsageError("--rff l must be >= 0 (0 selects the exact test)")
    return values["l"], values.get("seed")


def resolve_seed(flag_value):
    """Master seed: ``$SPECTRAL_MMD_SEED`` if set, else ``--seed``."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return flag_value


def _announce_seed(seed):
    print(f"seed={seed}", file=sys.stderr)


def _threads(value: int) -> int:
    if value < 0:
        raise UsageError("--threads must be >= 0 (0 = one per core)")
    return value


def _emit_json(payload: dict, out):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_test(args) -> int:
    for path in (args.x, args.y):
        if not Path(path).is_file():
            raise UsageError(f"input file not found: {path}")
    try:
        kernels = parse_kernel_spec(args.kernel)
        lambdas = parse_lambda_grid(args.lambda_grid)
        family = RegFamily(args.reg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    l, rff_seed = parse_rff(args.rff)  # noqa: E741
    if args.permutations < 1:
        raise UsageError("--permutations must be >= 1")
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    threads = _threads(args.threads)
    seed = resolve_seed(args.seed)
    _announce_seed(seed)

    data = load_csv(args.x, args.y)
    part = split(data.x, data.y, args.split_s, derive_seed(seed, SPLIT))
    plan = PermutationPlan(args.permutations, derive_seed(seed, PERMUTATION), part.n, part.m)
    with threadpool_limits(limits=1):
        report = adaptive_test(
            lambdas, kernels, l, part, plan, args.alpha, family,
            seed if rff_seed is None else rff_seed, n_jobs=threads,
        )
    payload = report.to_dict()
    payload["seeds"]["rff"] = rff_seed
    _emit_json(payload, args.out)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"reject={str(report.reject).lower()}", file=sys.stderr)
    return EXIT_REJECT if report.reject else EXIT_OK


def cmd_simulate(args) -> int:
    if args.family not in GENERATORS:
        raise UsageError(f"unknown family {args.family!r}; valid families: {', '.join(GENERATORS)}")
    seed = resolve_seed(args.seed)
    _announce_seed(seed)
    try:
        data = generate(args.family, args.param, args.d, args.n, args.m, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_csv(args.x, data.x)
    write_csv(args.y, data.y)
    return EXIT_OK


def _load_config(args) -> ExperimentConfig:
    if not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    try:
        config = ExperimentConfig.from_json(args.config)
        changes = {}
        seed = resolve_seed(args.seed)
        if seed is not None:
            changes["master_seed"] = seed
        if args.n_sims is not None:
            changes["n_sims"] = args.n_sims
        if changes:
            config = config.replace(**changes)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    _announce_seed(config.master_seed)
    return config


def cmd_power(args) -> int:
    config = _load_config(args)
    rows = run_power(config, threads=_threads(args.threads))
    write_power_csv(args.out, rows, timing=not args.no_timing)
    for row in rows:
        if row.error is not None:
            print(f"error: param={row.param} d={row.d} l={row.l}: {row.error}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config(args)
    _threads(args.threads)
    write_timing_csv(args.out, run_timing(config))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="spectral-mmd",
        description="Spectral-regularized MMD two-sample tests.",
        epilog=(
            "exit codes: 0 = completed, no rejection; 3 = test rejected the null; "
            "1 = usage error; 2 = data or numerical error. "
            f"{SEED_ENV}, when set, overrides --seed."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed (overridden by ${SEED_ENV})")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads, 0 = one per core; results do not depend on it")

    p = sub.add_parser("test", parents=[common], help="run the adaptive test on two CSV samples",
                       epilog="exits 3 when the null is rejected, 0 when it is not")
    p.add_argument("--x", required=True, help="CSV of the first sample (rows are observations)")
    p.add_argument("--y", required=True, help="CSV of the second sample")
    p.add_argument("--kernel", default="gaussian:h=logspace(-2,2,9)",
                   help="kernel grid, e.g. 'gaussian:h=logspace(-2,2,9)' or 'laplace:h=0.5,1'")
    p.add_argument("--lambda-grid", default="lambda=logspace(-6,0.75,10)",
                   help="regularization grid, e.g. 'lambda=logspace(-6,0.75,10)'")
    p.add_argument("--reg", default="showalter", choices=[f.value for f in RegFamily],
                   help="regularizer family")
    p.add_argument("--rff", nargs="+", default=["l=9"], metavar="KEY=INT",
                   help="'l=<int> seed=<int>': random features per kernel (0 = exact) "
                        "and their seed (default: the master seed)")
    p.add_argument("--split-s", type=int, default=20, help="rows held out of each sample")
    p.add_argument("--permutations", type=int, default=600, help="permutation replicas B")
    p.add_argument("--alpha", type=float, default=0.05, help="test level")
    p.add_argument("--out", default=None, help="JSON report path (default: stdout)")
    p.set_defaults(func=cmd_test, seed=0)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic two-sample problem")
    p.add_argument("--family", required=True, help=f"one of: {', '.join(GENERATORS)}")
    p.add_argument("--param", type=float, required=True,
                   help="shift (mean, median) or variance ratio (scale)")
    p.add_argument("--d", type=int, default=1, help="dimension")
    p.add_argument("--n", type=int, default=200, help="rows of the first sample (N)")
    p.add_argument("--m", type=int, default=200, help="rows of the second sample (M)")
    p.add_argument("--x", required=True, help="output CSV for the first sample")
    p.add_argument("--y", required=True, help="output CSV for the second sample")
    p.set_defaults(func=cmd_simulate, seed=0)

    for name, func, help_text, out_help in (
        ("power", cmd_power, "rejection rates over a config's grids", "power CSV path"),
        ("bench", cmd_bench, "time ratios of random-feature to exact tests", "time-ratio CSV path"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("config", help="experiment JSON")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--n-sims", type=int, default=None, help="override the config's n_sims")
        if name == "power":
            p.add_argument("--no-timing", action="store_true",
                           help="leave mean_time_ms empty so output is byte-reproducible")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spectral-mmd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CSVFormatError, NumericalError, ValueError) as exc:
        print(f"spectral-mmd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"spectral-mmd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
