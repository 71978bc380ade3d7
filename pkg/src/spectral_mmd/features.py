"""Random Fourier features for translation-invariant kernels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._rng import philox
from ._validation import check_matrix, check_positive_int, check_same_dim
from .kernels import Kernel, KernelFamily, parse_kernel_spec

__all__ = [
    "FrequencySet",
    "sample_frequencies",
    "feature_matrix",
    "approx_kernel",
    "RandomFourierFeatures",
]


@dataclass(frozen=True, eq=False)
class FrequencySet:
    """``l`` spectral frequencies (rows of ``theta``) and the zero-lag value ``v0``.

    Also usable wherever a kernel is expected: :meth:`gram` evaluates the
    random-feature kernel ``K_l``.
    """

    theta: np.ndarray
    v0: float = 1.0
    seed: int | None = None
    kernel: Kernel | None = field(default=None, compare=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, ndmin=2)
        if theta.ndim != 2 or theta.shape[0] < 1:
            raise ValueError(f"theta must be an l x d matrix, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite values")
        if not self.v0 > 0:
            raise ValueError("v0 must be positive")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def l(self) -> int:  # noqa: E743
        return self.theta.shape[0]

    @property
    def d(self) -> int:
        return self.theta.shape[1]

    def features(self, data) -> np.ndarray:
        return feature_matrix(self, data)

    def gram(self, A, B=None) -> np.ndarray:
        phi_a = feature_matrix(self, A)
        phi_b = phi_a if B is None else feature_matrix(self, B)
        return phi_a.T @ phi_b


def sample_frequencies(kernel: Kernel, l: int, d: int, seed: int) -> FrequencySet:  # noqa: E741
    """Draw ``l`` i.i.d. frequency vectors in ``R^d`` from the kernel's spectrum.

    The result is a deterministic function of ``(kernel, l, d, seed)``.
    """
    l = check_positive_int(l, "l")  # noqa: E741
    d = check_positive_int(d, "d")
    rng = philox(seed)
    theta = kernel.sample_spectral(rng, (l, d))
    return FrequencySet(theta=theta, v0=kernel.v0, seed=int(seed), kernel=kernel)


def feature_matrix(freqs: FrequencySet, data) -> np.ndarray:
    """The ``2l x n`` random-feature matrix of ``data`` (rows are observations).

    Rows ``2i`` and ``2i + 1`` (0-based) hold ``cos`` and ``sin`` of
    ``theta_i . x`` scaled by ``sqrt(v0 / l)``, so each column has squared norm
    ``v0``.
    """
    data = check_matrix(data, "data")
    if data.shape[1] != freqs.d:
        raise ValueError(
            f"dimension mismatch: data has d={data.shape[1]}, frequencies have d={freqs.d}"
        )
    proj = freqs.theta @ data.T  # l x n
    scale = np.sqrt(freqs.v0 / freqs.l)
    phi = np.empty((2 * freqs.l, data.shape[0]))
    phi[0::2] = np.cos(proj)
    phi[1::2] = np.sin(proj)
    phi *= scale
    return phi


def approx_kernel(freqs: FrequencySet, x, y) -> float:
    """Random-feature kernel value ``<Phi(x), Phi(y)>``."""
    x = check_matrix(np.atleast_1d(np.asarray(x, dtype=float))[None, :], "x")
    y = check_matrix(np.atleast_1d(np.asarray(y, dtype=float))[None, :], "y")
    check_same_dim(x, y, "x", "y")
    delta = (freqs.theta @ (x[0] - y[0]))
    # cos a cos b + sin a sin b = cos(a - b)
    return float(freqs.v0 * np.mean(np.cos(delta)))


class RandomFourierFeatures(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer mapping rows to interleaved cos/sin features.

    Parameters
    ----------
    kernel : Kernel, str or None, default=None
        Translation-invariant kernel to approximate, or a spec string such as
        ``"laplace:h=2"``. ``None`` means the Gaussian kernel with ``h = 1``.
    n_frequencies : int, default=100
        Number of frequency draws ``l``; the output has ``2 l`` columns.
    random_state : int, default=0
        Seed for the frequency draw.

    Attributes
    ----------
    frequencies_ : FrequencySet
    n_features_in_ : int
    """

    def __init__(self, kernel: Kernel | None = None, n_frequencies: int = 100, random_state: int = 0):
        self.kernel = kernel
        self.n_frequencies = n_frequencies
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        kernel = self.kernel
        if kernel is None:
            kernel = Kernel(KernelFamily.GAUSSIAN, 1.0)
        elif isinstance(kernel, str):
            kernels = parse_kernel_spec(kernel)
            if len(kernels) != 1:
                raise ValueError(f"expected a single kernel, got {len(kernels)} from {kernel!r}")
            kernel = kernels[0]
        self.frequencies_ = sample_frequencies(
            kernel, self.n_frequencies, X.shape[1], self.random_state
        )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "frequencies_")
        return feature_matrix(self.frequencies_, X).T
