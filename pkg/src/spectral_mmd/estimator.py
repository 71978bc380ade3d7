"""Scikit-learn style front end for the adaptive spectral MMD test."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ._rng import PERMUTATION, SPLIT, derive_seed
from ._validation import check_level, check_matrix, check_same_dim
from .kernels import Kernel, parse_kernel_spec
from .permutation import PermutationPlan, adaptive_test
from .regularizers import RegFamily, default_lambda_grid, parse_lambda_grid
from .statistics import split as split_samples


def _resolve_kernels(kernels) -> list[Kernel]:
    if isinstance(kernels, str):
        return parse_kernel_spec(kernels)
    if isinstance(kernels, Kernel):
        return [kernels]
    return list(kernels)


def _resolve_lambdas(lambdas) -> list[float]:
    if lambdas is None:
        return default_lambda_grid()
    if isinstance(lambdas, str):
        return parse_lambda_grid(lambdas)
    return [float(v) for v in np.atleast_1d(lambdas)]


class SpectralMMDTest(BaseEstimator):
    """Adaptive spectral-regularized MMD two-sample test.

    ``fit(X, Y)`` splits the samples, computes the statistic for every
    ``(lambda, bandwidth)`` pair and calibrates each against ``B`` permutation
    replicas; the null ``P = Q`` is rejected if any pair exceeds its
    Bonferroni-corrected critical value.

    Parameters
    ----------
    kernels : str or list of Kernel, default="gaussian:h=logspace(-2,2,9)"
        Bandwidth grid, either as kernel objects or as a spec string.
    lambdas : str, sequence of float or None, default=None
        Regularization grid; ``None`` uses ``10**(-6 + 0.75 i)``, ``i = 0..9``.
    regularizer : {"showalter", "tikhonov", "identity"}, default="showalter"
    n_frequencies : int, default=9
        Random Fourier frequency draws per kernel. ``0`` runs the exact test.
    split_size : int, default=20
        Rows held out of each sample to estimate the covariance.
    n_permutations : int, default=600
    alpha : float, default=0.05
    rule : {"quantile", "pvalue"}, default="quantile"
        ``"pvalue"`` rejects when ``(1 + #{replica >= stat}) / (B + 1)`` is at
        most the corrected level.
    deflation : float or None, default=None
        Optional factor ``w`` multiplying the corrected level.
    random_state : int, default=0
        Master seed; split, permutation and frequency seeds derive from it.
    n_jobs : int, default=1
        Threads across kernels. Results do not depend on it.

    Attributes
    ----------
    report_ : TestReport
    reject_ : bool
    statistics_ : ndarray of shape (n_lambdas, n_kernels)
    quantiles_ : ndarray of shape (n_lambdas, n_kernels)
    """

    def __init__(self, kernels="gaussian:h=logspace(-2,2,9)", lambdas=None,
                 regularizer="showalter", n_frequencies=9, split_size=20,
                 n_permutations=600, alpha=0.05, rule="quantile", deflation=None,
                 random_state=0, n_jobs=1):
        self.kernels = kernels
        self.lambdas = lambdas
        self.regularizer = regularizer
        self.n_frequencies = n_frequencies
        self.split_size = split_size
        self.n_permutations = n_permutations
        self.alpha = alpha
        self.rule = rule
        self.deflation = deflation
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, Y):
        """Run the test of ``X ~ P`` against ``Y ~ Q``.

        Parameters
        ----------
        X : array-like of shape (N, d)
        Y : array-like of shape (M, d)

        Returns
        -------
        self
        """
        X = check_matrix(X, "X")
        Y = check_matrix(Y, "Y")
        check_same_dim(X, Y, "X", "Y")
        check_level(self.alpha)
        kernels = _resolve_kernels(self.kernels)
        lambdas = _resolve_lambdas(self.lambdas)
        seed = int(self.random_state)

        data_split = split_samples(X, Y, self.split_size, derive_seed(seed, SPLIT))
        plan = PermutationPlan(
            int(self.n_permutations), derive_seed(seed, PERMUTATION), data_split.n, data_split.m
        )
        report = adaptive_test(
            lambdas, kernels, int(self.n_frequencies), data_split, plan, self.alpha,
            RegFamily(self.regularizer), seed, self.rule, self.deflation, self.n_jobs,
        )
        shape = (len(kernels), len(lambdas))
        self.report_ = report
        self.reject_ = report.reject
        self.statistics_ = np.array([c.statistic for c in report.cells]).reshape(shape).T
        self.quantiles_ = np.array([c.quantile for c in report.cells]).reshape(shape).T
        self.n_features_in_ = X.shape[1]
        return self

    def test(self, X, Y):
        """Fit and return the :class:`~spectral_mmd.permutation.TestReport`."""
        return self.fit(X, Y).report_
