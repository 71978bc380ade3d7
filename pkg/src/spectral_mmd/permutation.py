"""Permutation tests: single-cell tests and the adaptive union test over (lambda, kernel)."""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._rng import FREQUENCIES, derive_seed, philox
from ._validation import check_level, check_positive_int
from .features import FrequencySet, sample_frequencies
from .kernels import Kernel
from .regularizers import RegFamily, Regularizer
from .statistics import ExactStatisticBatch, RFFStatisticBatch, SplitData, selection_matrix

__all__ = [
    "PermutationPlan",
    "CellResult",
    "TestReport",
    "permuted_statistics",
    "empirical_quantile",
    "single_test",
    "adaptive_test",
    "exact_adaptive_test",
    "theoretical_min_permutations",
]


@dataclass(frozen=True)
class PermutationPlan:
    """``B`` uniformly random relabelings of the pooled sample of size ``n + m``.

    Replica ``i`` is built from uniforms at a fixed offset (``i * (n + m)``) of a
    single Philox stream keyed by ``seed``, so it depends only on ``seed`` and
    ``i`` and is the same whatever ``B`` is.
    """

    B: int
    seed: int
    n: int
    m: int

    def __post_init__(self):
        check_positive_int(self.B, "B")
        check_positive_int(self.n, "n", 2)
        check_positive_int(self.m, "m", 2)

    def _uniforms(self) -> np.ndarray:
        return philox(self.seed).random((self.B, self.n + self.m))

    def permutations(self) -> np.ndarray:
        """``(B, n + m)`` index arrays; the first ``n`` entries form ``X^pi``."""
        return np.argsort(self._uniforms(), axis=1, kind="stable")

    def masks(self) -> np.ndarray:
        """``(B, n + m)`` booleans marking the pooled rows assigned to ``X^pi``."""
        u = self._uniforms()
        kth = np.partition(u, self.n - 1, axis=1)[:, self.n - 1]
        return u <= kth[:, None]

    @staticmethod
    def digest(masks: np.ndarray) -> str:
        return hashlib.sha256(np.packbits(masks, axis=1).tobytes()).hexdigest()[:16]


def identity_mask(n: int, m: int) -> np.ndarray:
    return np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])


def masks_from_permutations(perms, n: int) -> np.ndarray:
    perms = np.atleast_2d(np.asarray(perms, dtype=int))
    masks = np.zeros(perms.shape, dtype=bool)
    np.put_along_axis(masks, perms[:, :n], True, axis=1)
    return masks


def _batch(kernel_or_freqs, regs, split):
    if isinstance(kernel_or_freqs, FrequencySet):
        return RFFStatisticBatch(kernel_or_freqs, regs, split)
    return ExactStatisticBatch(kernel_or_freqs, regs, split)


def permuted_statistics(kernel_or_freqs, reg: Regularizer, split: SplitData,
                        plan: PermutationPlan | None = None, permutations=None) -> np.ndarray:
    """Statistic recomputed on each relabeled pooled sample, ``z`` held fixed.

    Pass a :class:`~spectral_mmd.features.FrequencySet` for the random-feature
    statistic or a kernel for the exact one. Explicit ``permutations`` (rows of
    pooled indices) override ``plan``.
    """
    if permutations is not None:
        masks = masks_from_permutations(permutations, split.n)
    else:
        if plan is None:
            raise ValueError("either plan or permutations is required")
        if (plan.n, plan.m) != (split.n, split.m):
            raise ValueError(
                f"plan sizes (n={plan.n}, m={plan.m}) do not match split (n={split.n}, m={split.m})"
            )
        masks = plan.masks()
    return _batch(kernel_or_freqs, [reg], split).evaluate(masks)[0]


def empirical_quantile(values, level: float) -> float:
    """``inf{q : F_B(q) >= level}`` for the empirical CDF of ``values``.

    This is the ``ceil(B * level)``-th smallest value.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("cannot take a quantile of an empty vector")
    if not 0.0 < level <= 1.0:
        raise ValueError(f"level must lie in (0, 1], got {level}")
    B = values.size
    # guard against B * level landing a hair above an integer
    k = math.ceil(B * level - 1e-9)
    k = min(max(k, 1), B)
    return float(np.partition(values, k - 1)[k - 1])


def permutation_pvalue(observed: float, replicas) -> float:
    replicas = np.asarray(replicas, dtype=float)
    return float((1 + np.count_nonzero(replicas >= observed)) / (replicas.size + 1))


def theoretical_min_permutations(alpha: float, cells: int, w: float, w_tilde: float | None = None) -> int:
    """Smallest ``B`` covered by the finite-sample level guarantee for a union test.

    ``B >= cells^2 / (2 w~^2 alpha^2) * log(2 cells / (alpha (1 - w - w~)))``
    with ``0 < w~ < w < 1/2``; ``w~`` defaults to ``w / 2``.
    """
    if w_tilde is None:
        w_tilde = w / 2.0
    if not 0 < w_tilde < w < 0.5:
        raise ValueError("need 0 < w_tilde < w < 1/2")
    bound = cells**2 / (2 * w_tilde**2 * alpha**2) * math.log(2 * cells / (alpha * (1 - w - w_tilde)))
    return math.ceil(bound)


@dataclass(frozen=True)
class CellResult:
    kernel: str
    lam: float
    statistic: float
    quantile: float
    reject: bool
    pvalue: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "lambda": self.lam,
            "statistic": self.statistic,
            "quantile": self.quantile,
            "reject": self.reject,
            "pvalue": self.pvalue,
            "degenerate": self.degenerate,
        }


def _decide(observed: float, replicas: np.ndarray, level_alpha: float, rule: str):
    quantile = empirical_quantile(replicas, 1.0 - level_alpha)
    pvalue = permutation_pvalue(observed, replicas)
    if rule == "quantile":
        reject = bool(observed >= quantile)
    elif rule == "pvalue":
        reject = bool(pvalue <= level_alpha)
    else:
        raise ValueError(f"rule must be 'quantile' or 'pvalue', got {rule!r}")
    degenerate = bool(np.ptp(replicas) == 0.0)
    return quantile, pvalue, reject, degenerate


def single_test(kernel_or_freqs, reg: Regularizer, split: SplitData, plan: PermutationPlan,
                alpha: float = 0.05, w: float = 1.0, rule: str = "quantile") -> dict:
    """Permutation test for one kernel and one regularizer.

    Rejects when the observed statistic is ``>=`` the ``1 - w * alpha`` quantile
    of the ``B`` replicas. ``w = 1`` is the undeflated rule used in practice;
    the finite-sample theory asks for ``w < 1/2``.
    """
    alpha = check_level(alpha)
    if not 0 < w <= 1:
        raise ValueError("w must lie in (0, 1]")
    if (plan.n, plan.m) != (split.n, split.m):
        raise ValueError("plan sizes do not match split")
    masks = np.vstack([identity_mask(split.n, split.m), plan.masks()])
    values = _batch(kernel_or_freqs, [reg], split).evaluate(masks)[0]
    observed, replicas = float(values[0]), values[1:]
    quantile, pvalue, reject, degenerate = _decide(observed, replicas, w * alpha, rule)
    return {
        "statistic": observed,
        "quantile": quantile,
        "reject": reject,
        "pvalue": pvalue,
        "degenerate": degenerate,
        "replicas": replicas,
    }


@dataclass
class TestReport:
    """Outcome of an adaptive test over a ``lambda x kernel`` grid."""

    __test__ = False  # not a pytest class

    cells: list[CellResult]
    reject: bool
    alpha: float
    corrected_alpha: float
    n_permutations: int
    n_frequencies: int
    regularizer: str
    rule: str
    seeds: dict
    permutation_digests: dict
    degenerate_statistics: bool
    warnings: list[str] = field(default_factory=list)
    timing_ms: dict = field(default_factory=dict)

    @property
    def observed(self) -> dict:
        return {(c.lam, c.kernel): c.statistic for c in self.cells}

    @property
    def quantiles(self) -> dict:
        return {(c.lam, c.kernel): c.quantile for c in self.cells}

    @property
    def per_cell_reject(self) -> dict:
        return {(c.lam, c.kernel): c.reject for c in self.cells}

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "reject": self.reject,
            "alpha": self.alpha,
            "corrected_alpha": self.corrected_alpha,
            "n_permutations": self.n_permutations,
            "n_frequencies": self.n_frequencies,
            "regularizer": self.regularizer,
            "rule": self.rule,
            "degenerate_statistics": self.degenerate_statistics,
            "seeds": self.seeds,
            "permutation_digests": self.permutation_digests,
            "warnings": list(self.warnings),
            "cells": [c.to_dict() for c in self.cells],
        }
        if timing:
            out["timing_ms"] = dict(self.timing_ms)
        return out


def _run_kernel(kernel: Kernel, h_index: int, l: int, regs, split: SplitData,  # noqa: E741
                selection: np.ndarray, seed: int):
    if l > 0:
        freq_seed = derive_seed(seed, FREQUENCIES, h_index)
        target = sample_frequencies(kernel, l, split.d, freq_seed)
    else:
        freq_seed = None
        target = kernel
    values = _batch(target, regs, split)._evaluate(selection)
    return freq_seed, values


def adaptive_test(lambdas: Sequence[float], kernels: Sequence[Kernel], l: int,  # noqa: E741
                  split: SplitData, plan: PermutationPlan, alpha: float = 0.05,
                  reg_family: RegFamily | str = RegFamily.SHOWALTER, seed: int = 0,
                  rule: str = "quantile", w: float | None = None, n_jobs: int = 1) -> TestReport:
    """Union test over every ``(lambda, kernel)`` pair with a Bonferroni level.

    Each cell compares its statistic with the ``1 - alpha / (|Lambda| |W|)``
    quantile of its own replicas and the test rejects if any cell does. ``l > 0``
    uses ``l`` random frequencies per kernel, drawn with a seed derived from
    ``seed`` and the kernel's index; ``l = 0`` runs the exact statistic. All
    cells share the same ``B`` relabelings.
    """
    t0 = time.perf_counter()
    alpha = check_level(alpha)
    lambdas = [float(v) for v in lambdas]
    kernels = list(kernels)
    if not lambdas or not kernels:
        raise ValueError("lambda and kernel grids must be nonempty")
    if int(l) < 0:
        raise ValueError("l must be >= 0 (0 selects the exact statistic)")
    if (plan.n, plan.m) != (split.n, split.m):
        raise ValueError("plan sizes do not match split")
    if w is not None and not 0 < w <= 1:
        raise ValueError("w must lie in (0, 1]")
    family = RegFamily(reg_family)
    regs = [Regularizer(family, lam) for lam in lambdas]
    cells_total = len(lambdas) * len(kernels)
    corrected = alpha / cells_total
    level = corrected * (w if w is not None else 1.0)

    warnings = []
    if level <= 1.0 / plan.B:
        warnings.append(
            f"B={plan.B} is too small for the corrected level {level:.3g}: the critical "
            "value is the largest replica"
        )
    if w is not None and w < 0.5:
        needed = theoretical_min_permutations(alpha, cells_total, w)
        if plan.B < needed:
            warnings.append(f"B={plan.B} is below the finite-sample bound B >= {needed}")

    masks = np.vstack([identity_mask(split.n, split.m), plan.masks()])
    digest = PermutationPlan.digest(masks[1:])
    selection = selection_matrix(masks, split.n, split.m)
    t_setup = time.perf_counter()

    def work(idx):
        return _run_kernel(kernels[idx], idx, int(l), regs, split, selection, seed)

    if n_jobs is not None and n_jobs != 1 and len(kernels) > 1:
        workers = None if n_jobs <= 0 else n_jobs
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(len(kernels))))
    else:
        results = [work(i) for i in range(len(kernels))]
    t_stats = time.perf_counter()

    cells = []
    freq_seeds = []
    for kernel, (freq_seed, values) in zip(kernels, results):
        freq_seeds.append(freq_seed)
        for j, lam in enumerate(lambdas):
            observed, replicas = float(values[j, 0]), values[j, 1:]
            quantile, pvalue, reject, degenerate = _decide(observed, replicas, level, rule)
            cells.append(CellResult(kernel.spec, lam, observed, quantile, reject, pvalue, degenerate))
    t_end = time.perf_counter()

    return TestReport(
        cells=cells,
        reject=any(c.reject for c in cells),
        alpha=alpha,
        corrected_alpha=corrected,
        n_permutations=plan.B,
        n_frequencies=int(l),
        regularizer=family.value,
        rule=rule,
        seeds={
            "master": int(seed),
            "split": split.bern_seed,
            "permutation": int(plan.seed),
            "frequencies": freq_seeds if l > 0 else None,
        },
        permutation_digests={k.spec: digest for k in kernels},
        degenerate_statistics=any(c.degenerate for c in cells),
        warnings=warnings,
        timing_ms={
            "setup": 1e3 * (t_setup - t0),
            "statistics": 1e3 * (t_stats - t_setup),
            "decisions": 1e3 * (t_end - t_stats),
            "total": 1e3 * (t_end - t0),
        },
    )


def exact_adaptive_test(lambdas, kernels, split, plan, alpha=0.05,
                        reg_family=RegFamily.SHOWALTER, seed=0, rule="quantile",
                        w=None, n_jobs=1) -> TestReport:
    """:func:`adaptive_test` with the exact kernel statistic."""
    return adaptive_test(lambdas, kernels, 0, split, plan, alpha, reg_family, seed, rule, w, n_jobs)
