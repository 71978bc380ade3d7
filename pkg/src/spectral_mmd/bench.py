"""Power-curve and timing harness.

A run is described by an :class:`ExperimentConfig` (usually loaded from JSON).
:func:`run_power` replicates adaptive tests over the generator's parameter grid,
the data dimensions and the feature counts, and :func:`run_timing` compares the
wall time of random-feature tests with the exact test on the same data.

Every trial draws its data, split, permutations and frequencies from seeds
derived from ``master_seed`` and the trial's coordinates, so results do not
depend on the number of worker threads or on the order in which trials finish.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import statistics as pystats
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ._rng import PERMUTATION, REDRAW, SPLIT, TRIAL, derive_seed
from .data import GENERATORS, generate
from .features import sample_frequencies
from .kernels import Kernel, parse_kernel_spec
from .permutation import PermutationPlan, adaptive_test, identity_mask
from .regularizers import RegFamily, Regularizer, parse_lambda_grid
from .statistics import RFFStatisticBatch, selection_matrix, split

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PowerRow",
    "run_power",
    "run_timing",
    "write_power_csv",
    "write_timing_csv",
    "POWER_HEADER",
    "TIMING_HEADER",
    "statistic_time",
    "binomial_band",
]

POWER_HEADER = ["generator", "param", "d", "l", "rejection_rate", "n_trials", "mean_time_ms", "seed_digest"]
TIMING_HEADER = ["l", "time_ratio"]


class ConfigError(ValueError):
    """Invalid experiment configuration (bad JSON, unknown or missing fields)."""


def _grid(value, name):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float)):
        return [float(value)]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{name} must be a nonempty list or a grid string")
    return [float(v) for v in value]


@dataclass(frozen=True)
class ExperimentConfig:
    """A replicated-test experiment.

    Attributes
    ----------
    generator : dict
        ``{"family": <name>, "param_grid": [..]}`` with a family from
        :data:`spectral_mmd.data.GENERATORS`.
    dims : list of int
    N, M, s : int
        Sample sizes and the number of rows of each sample held out for the
        covariance estimate.
    alpha : float
    B_rff, B_exact : int
        Permutations for random-feature tests and for exact tests.
    l_grid : list of int
        Frequency counts; ``0`` selects the exact test.
    kernel_grid : str
        Kernel spec such as ``"gaussian:h=logspace(-2,2,9)"``.
    lambda_grid : str or list of float
    reg : str
    n_sims : int
        Independent data sets per row.
    n_rff_redraws : int
        Frequency redraws per data set for ``l > 0``.
    master_seed : int
    timing_repeats : int
        Timed repetitions per ``l`` in :func:`run_timing` (at least 3).
    """

    generator: dict
    dims: list
    N: int
    M: int
    s: int
    alpha: float
    B_rff: int
    B_exact: int
    l_grid: list
    kernel_grid: str
    lambda_grid: object
    reg: str = "showalter"
    n_sims: int = 100
    n_rff_redraws: int = 3
    master_seed: int = 0
    timing_repeats: int = 5

    def __post_init__(self):
        gen = self.generator
        if not isinstance(gen, dict) or set(gen) != {"family", "param_grid"}:
            raise ConfigError('generator must be {"family": ..., "param_grid": [...]}')
        if gen["family"] not in GENERATORS:
            raise ConfigError(
                f"unknown generator family {gen['family']!r}; valid: {', '.join(GENERATORS)}"
            )
        if not isinstance(gen["param_grid"], list) or not gen["param_grid"]:
            raise ConfigError("generator.param_grid must be a nonempty list")
        for name in ("dims", "l_grid"):
            values = getattr(self, name)
            if not isinstance(values, list) or not values:
                raise ConfigError(f"{name} must be a nonempty list")
            if any(not isinstance(v, int) or isinstance(v, bool) for v in values):
                raise ConfigError(f"{name} must contain integers")
        if any(v < 1 for v in self.dims):
            raise ConfigError("dims must be positive")
        if any(v < 0 for v in self.l_grid):
            raise ConfigError("l_grid entries must be >= 0")
        for name in ("N", "M", "s", "B_rff", "B_exact", "n_sims", "n_rff_redraws", "timing_repeats"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.timing_repeats < 3:
            raise ConfigError("timing_repeats must be >= 3")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        try:
            RegFamily(self.reg)
            kernels = self.kernels()
            lambdas = self.lambdas()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not kernels or not lambdas:
            raise ConfigError("kernel_grid and lambda_grid must be nonempty")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        required = {f.name for f in dataclasses.fields(cls) if f.default is dataclasses.MISSING}
        missing = sorted(required - set(data))
        if missing:
            raise ConfigError(f"missing config fields: {', '.join(missing)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def kernels(self) -> list[Kernel]:
        return parse_kernel_spec(self.kernel_grid)

    def lambdas(self) -> list[float]:
        if isinstance(self.lambda_grid, str):
            return parse_lambda_grid(self.lambda_grid)
        values = _grid(self.lambda_grid, "lambda_grid")
        if any(v <= 0 for v in values):
            raise ValueError("lambda values must be positive")
        return values

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class PowerRow:
    """Aggregated outcome of the trials for one ``(param, d, l)`` cell.

    ``error`` is set, and the rate left undefined, when the cell could not run.
    """

    generator: str
    param: float
    d: int
    l: int  # noqa: E741
    rejections: int
    n_trials: int
    mean_time_ms: float
    seed_digest: str
    error: str | None = None

    @property
    def rejection_rate(self) -> float:
        if self.n_trials == 0:
            return float("nan")
        return self.rejections / self.n_trials

    def to_record(self, timing: bool = True) -> dict:
        failed = self.error is not None
        return {
            "generator": self.generator,
            "param": repr(float(self.param)),
            "d": self.d,
            "l": self.l,
            "rejection_rate": "" if failed else repr(self.rejection_rate),
            "n_trials": self.n_trials,
            "mean_time_ms": "" if failed or not timing else f"{self.mean_time_ms:.3f}",
            "seed_digest": f"error: {self.error}" if failed else self.seed_digest,
        }


@dataclass(frozen=True)
class _Trial:
    param_index: int
    dim_index: int
    sim: int
    redraw: int


def _data_seed(config: ExperimentConfig, trial: _Trial) -> int:
    # shared by every l so power curves across feature counts use the same data
    return derive_seed(config.master_seed, TRIAL, trial.param_index, trial.dim_index, trial.sim)


def _test_seed(config: ExperimentConfig, trial: _Trial) -> int:
    return derive_seed(
        config.master_seed, REDRAW, trial.param_index, trial.dim_index, trial.sim, trial.redraw
    )


def _adaptive_on(data, config: ExperimentConfig, l: int, seed: int,  # noqa: E741
                 kernels, lambdas):
    """Split ``data`` and run one adaptive test; returns ``(reject, seconds)``."""
    t0 = time.perf_counter()
    part = split(data.x, data.y, config.s, derive_seed(seed, SPLIT))
    B = config.B_rff if l > 0 else config.B_exact
    plan = PermutationPlan(B, derive_seed(seed, PERMUTATION), part.n, part.m)
    report = adaptive_test(lambdas, kernels, l, part, plan, config.alpha, config.reg, seed)
    return report.reject, time.perf_counter() - t0


def _run_cell(config, param_index, dim_index, l, kernels, lambdas, pool):  # noqa: E741
    param = float(config.generator["param_grid"][param_index])
    d = config.dims[dim_index]
    redraws = config.n_rff_redraws if l > 0 else 1
    trials = [_Trial(param_index, dim_index, sim, r) for sim in range(config.n_sims) for r in range(redraws)]
    family = config.generator["family"]

    def work(trial):
        data = generate(family, param, d, config.N, config.M, _data_seed(config, trial))
        return _adaptive_on(data, config, l, _test_seed(config, trial), kernels, lambdas)

    seeds = [(_data_seed(config, t), _test_seed(config, t)) for t in trials]
    digest = hashlib.sha256(json.dumps(seeds).encode()).hexdigest()[:16]
    try:
        if config.s < 2 or config.N - config.s < 2 or config.M - config.s < 2:
            raise ValueError(
                f"infeasible split: s={config.s} with N={config.N}, M={config.M}"
            )
        results = list(pool.map(work, trials)) if pool is not None else [work(t) for t in trials]
    except ValueError as exc:
        return PowerRow(family, param, d, l, 0, 0, float("nan"), digest, str(exc))
    rejections = sum(1 for reject, _ in results if reject)
    mean_ms = 1e3 * sum(sec for _, sec in results) / len(results)
    return PowerRow(family, param, d, l, rejections, len(results), mean_ms, digest)


def _pool(threads: int):
    if threads == 1:
        return None
    return ThreadPoolExecutor(max_workers=None if threads <= 0 else threads)


def run_power(config: ExperimentConfig, threads: int = 1) -> list[PowerRow]:
    """Rejection rates for every ``(param, d, l)`` cell, in that nesting order.

    Each cell runs ``n_sims`` data sets, and for ``l > 0`` ``n_rff_redraws``
    frequency draws per data set. A cell whose split is infeasible yields a
    row with ``error`` set and the run continues. ``threads`` parallelizes
    trials within a cell (``0`` = one per core); BLAS is limited to one thread
    so that results are bit-identical for any ``threads``.
    """
    kernels = config.kernels()
    lambdas = config.lambdas()
    rows = []
    pool = _pool(threads)
    try:
        with threadpool_limits(limits=1):
            for pi in range(len(config.generator["param_grid"])):
                for di in range(len(config.dims)):
                    for l in config.l_grid:  # noqa: E741
                        rows.append(_run_cell(config, pi, di, l, kernels, lambdas, pool))
    finally:
        if pool is not None:
            pool.shutdown()
    return rows


def _median_time(fn, repeats: int) -> float:
    fn()  # warm-up, discarded
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return pystats.median(samples)


def run_timing(config: ExperimentConfig, repeats: int | None = None) -> list[dict]:
    """Wall-time ratio of the ``l``-feature adaptive test to the exact one.

    Uses the first parameter and dimension of the config on one data set.
    Each entry of ``l_grid`` and, separately, the exact baseline are timed as
    the median of ``repeats`` runs after a discarded warm-up round, so the row
    for ``l = 0`` is a self-ratio that shows the timer noise. Data generation is
    not timed.
    """
    repeats = config.timing_repeats if repeats is None else int(repeats)
    kernels = config.kernels()
    lambdas = config.lambdas()
    trial = _Trial(0, 0, 0, 0)
    data = generate(config.generator["family"], float(config.generator["param_grid"][0]),
                    config.dims[0], config.N, config.M, _data_seed(config, trial))
    seed = _test_seed(config, trial)

    # the baseline is timed as its own entry, so the l = 0 row is a self-ratio
    entries = [0] + [int(l) for l in config.l_grid]  # noqa: E741
    samples = [[] for _ in entries]
    with threadpool_limits(limits=1):
        # round-robin over entries so slow drifts (frequency scaling, caches)
        # hit every entry alike; the first round is a discarded warm-up
        for rep in range(repeats + 1):
            for k, l in enumerate(entries):  # noqa: E741
                t0 = time.perf_counter()
                _adaptive_on(data, config, l, seed, kernels, lambdas)
                if rep > 0:
                    samples[k].append(time.perf_counter() - t0)
    baseline = pystats.median(samples[0])
    return [
        {"l": l, "time_ratio": pystats.median(times) / baseline}
        for l, times in zip(entries[1:], samples[1:])  # noqa: E741
    ]


def statistic_time(n: int, m: int, s: int, d: int, l: int, B: int,  # noqa: E741
                   repeats: int = 5, seed: int = 0) -> float:
    """Median seconds to evaluate the random-feature statistic on ``B`` relabelings.

    Covers one kernel and one regularizer on standard normal data, with
    features, covariance and relabeled statistics all included; this is the
    per-cell work of the adaptive test.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n + s, d))
    y = rng.standard_normal((m + s, d))
    part = split(x, y, s, seed)
    kernel = parse_kernel_spec("gaussian:h=1")[0]
    plan = PermutationPlan(B, seed, part.n, part.m)
    masks = np.vstack([identity_mask(part.n, part.m), plan.masks()])
    selection = selection_matrix(masks, part.n, part.m)
    freqs = sample_frequencies(kernel, l, d, seed)
    reg = Regularizer(RegFamily.SHOWALTER, 1e-3)

    def once():
        RFFStatisticBatch(freqs, [reg], part)._evaluate(selection)

    with threadpool_limits(limits=1):
        return _median_time(once, repeats)


def _write(path, header, records):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)


def write_power_csv(path, rows: list[PowerRow], timing: bool = True) -> None:
    """Write power rows; ``timing=False`` blanks ``mean_time_ms`` for reproducible files."""
    _write(path, POWER_HEADER, [r.to_record(timing) for r in rows])


def write_timing_csv(path, rows: list[dict]) -> None:
    _write(path, TIMING_HEADER, [{"l": r["l"], "time_ratio": f"{r['time_ratio']:.4f}"} for r in rows])


def binomial_band(alpha: float, n_trials: int, width: float = 3.0) -> float:
    """Upper edge ``alpha + width * sqrt(alpha (1 - alpha) / n_trials)``."""
    return alpha + width * math.sqrt(alpha * (1 - alpha) / n_trials)
