"""Two-sample statistics: MMD, the exact spectral statistic and its RFF version.

Two routes compute the spectral-regularized statistic:

* :func:`exact_statistic` works on the ``s x s`` centred Gram matrix of the
  covariance sample ``z`` and needs the full kernel matrices of the data;
* :func:`rff_statistic` works in the ``2l``-dimensional random-feature space.

Feeding :func:`exact_statistic` a :class:`~spectral_mmd.features.FrequencySet`
as its kernel makes both routes compute the same number, which the tests use
as a cross-check.

The ``*Batch`` classes evaluate the statistic for many relabelings of the
pooled sample at once; they are what the permutation tests run on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._rng import philox
from ._validation import check_matrix, check_same_dim
from .features import FrequencySet, feature_matrix
from .regularizers import Regularizer

__all__ = [
    "NumericalError",
    "SplitData",
    "SpectralOperator",
    "split",
    "mmd_u",
    "mmd_rff",
    "gram_operator",
    "feature_operator",
    "exact_statistic",
    "rff_statistic",
    "effective_dims",
    "ExactStatisticBatch",
    "RFFStatisticBatch",
]

# eigenvalues below this fraction of the largest are treated as null directions
RETAIN_RTOL = 1e-12
# tolerated negative eigenvalues (relative to the largest) before clamping
NEGATIVE_RTOL = 1e-10


class NumericalError(ArithmeticError):
    """An eigendecomposition failed or produced an indefinite spectrum."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True, eq=False)
class SplitData:
    """Mean-estimation samples plus the Bernoulli mixture used for the covariance."""

    x_main: np.ndarray
    y_main: np.ndarray
    z: np.ndarray
    alpha: np.ndarray
    bern_seed: int | None = None

    @property
    def n(self) -> int:
        return self.x_main.shape[0]

    @property
    def m(self) -> int:
        return self.y_main.shape[0]

    @property
    def s(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    @property
    def pooled(self) -> np.ndarray:
        return np.vstack([self.x_main, self.y_main])

    @classmethod
    def from_parts(cls, x_main, y_main, z) -> "SplitData":
        """Wrap pre-split samples (``alpha`` is unknown and left empty)."""
        x_main = check_matrix(x_main, "x_main", min_rows=2)
        y_main = check_matrix(y_main, "y_main", min_rows=2)
        z = check_matrix(z, "z", min_rows=2)
        check_same_dim(x_main, y_main, "x_main", "y_main")
        check_same_dim(x_main, z, "x_main", "z")
        return cls(x_main, y_main, z, np.empty(0, dtype=bool))


def split(x, y, s: int, seed: int) -> SplitData:
    """Hold out the last ``s`` rows of each sample and mix them into ``z``.

    Row ``i`` of ``z`` is the ``i``-th held-out row of ``x`` when the
    Bernoulli(1/2) draw ``alpha[i]`` is true, otherwise the ``i``-th held-out
    row of ``y``.
    """
    x = check_matrix(x, "x")
    y = check_matrix(y, "y")
    check_same_dim(x, y, "x", "y")
    s = int(s)
    N, M = x.shape[0], y.shape[0]
    if s < 2:
        raise ValueError(f"split size s must be >= 2, got s={s}")
    if N - s < 2:
        raise ValueError(f"n = N - s must be >= 2, got N={N}, s={s} (n={N - s})")
    if M - s < 2:
        raise ValueError(f"m = M - s must be >= 2, got M={M}, s={s} (m={M - s})")
    alpha = philox(seed).random(s) < 0.5
    z = np.where(alpha[:, None], x[N - s:], y[M - s:])
    return SplitData(x[: N - s].copy(), y[: M - s].copy(), z, alpha, int(seed))


def _u_stat_from_grams(kxx, kyy, kxy) -> float:
    n, m = kxx.shape[0], kyy.shape[0]
    xx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    yy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(xx + yy - 2.0 * kxy.sum() / (n * m))


def mmd_u(kernel, x, y) -> float:
    """Unbiased (U-statistic) estimate of squared MMD. May be negative."""
    x = check_matrix(x, "x", min_rows=2)
    y = check_matrix(y, "y", min_rows=2)
    check_same_dim(x, y, "x", "y")
    return _u_stat_from_grams(kernel.gram(x, x), kernel.gram(y, y), kernel.gram(x, y))


def mmd_rff(freqs: FrequencySet, x, y, flavor: str = "U") -> float:
    """Random-feature estimate of squared MMD, V- or U-statistic form."""
    flavor = flavor.upper()
    if flavor not in ("U", "V"):
        raise ValueError(f"flavor must be 'U' or 'V', got {flavor!r}")
    min_rows = 2 if flavor == "U" else 1
    x = check_matrix(x, "x", min_rows=min_rows)
    y = check_matrix(y, "y", min_rows=min_rows)
    phi_x = feature_matrix(freqs, x)
    phi_y = feature_matrix(freqs, y)
    n, m = x.shape[0], y.shape[0]
    sx, sy = phi_x.sum(axis=1), phi_y.sum(axis=1)
    if flavor == "V":
        diff = sx / n - sy / m
        return float(diff @ diff)
    a = sx @ sx - np.sum(phi_x * phi_x)
    b = sy @ sy - np.sum(phi_y * phi_y)
    return float(a / (n * (n - 1)) + b / (m * (m - 1)) - 2.0 * (sx @ sy) / (n * m))


class OperatorMode(str, enum.Enum):
    GRAM_SIDE = "gram"
    FEATURE_SIDE = "feature"


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Eigensystem of an empirical covariance, sorted nonincreasing and clamped at 0.

    ``eigvecs`` may be thin (``p x r`` with ``r < p``): the remaining
    directions then have eigenvalue 0. This happens on the feature side when
    ``2 l`` exceeds ``s``, since the covariance has rank below ``s``.
    """

    eigvals: np.ndarray
    eigvecs: np.ndarray
    mode: OperatorMode

    @property
    def dim(self) -> int:
        return self.eigvecs.shape[0]

    def regularized(self, reg: Regularizer) -> np.ndarray:
        """``g^(1/2)`` of the operator as a dense matrix, ``V diag(sqrt(g(eigvals))) V^T``."""
        root = np.sqrt(reg(self.eigvals))
        dense = (self.eigvecs * root) @ self.eigvecs.T
        if self.eigvecs.shape[1] < self.dim:
            complement = np.eye(self.dim) - self.eigvecs @ self.eigvecs.T
            dense += np.sqrt(reg.at_zero()) * complement
        return dense

    def apply_root(self, reg: Regularizer, vectors: np.ndarray) -> np.ndarray:
        """``g^(1/2)(operator) @ vectors`` without forming a dense matrix when the basis is thin."""
        if self.eigvecs.shape[1] == self.dim:
            return self.regularized(reg) @ vectors
        root0 = np.sqrt(reg.at_zero())
        shift = np.sqrt(reg(self.eigvals)) - root0
        return root0 * vectors + self.eigvecs @ (shift[:, None] * (self.eigvecs.T @ vectors))

    def retained(self) -> np.ndarray:
        top = self.eigvals[0] if self.eigvals.size else 0.0
        return self.eigvals > max(RETAIN_RTOL * top, 0.0)

    def gram_weights(self, reg: Regularizer) -> np.ndarray:
        """``sum_i (g(l_i) - g(0)) / l_i  a_i a_i^T`` over retained eigenpairs."""
        keep = self.retained()
        lam = self.eigvals[keep]
        vecs = self.eigvecs[:, keep]
        w = (reg(lam) - reg.at_zero()) / lam
        return (vecs * w) @ vecs.T


def _symmetric_eigensystem(matrix: np.ndarray, mode: OperatorMode, scale: float) -> SpectralOperator:
    """Sorted, clamped eigensystem; ``scale`` bounds the entries of the un-centred input."""
    matrix = 0.5 * (matrix + matrix.T)
    try:
        vals, vecs = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed: {exc}",
            {"shape": matrix.shape, "fro_norm": float(np.linalg.norm(matrix))},
        ) from exc
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    top = max(float(vals[0]), 0.0)
    floor = float(vals[-1])
    # roundoff on a (near) zero matrix is measured against the input scale
    tol = NEGATIVE_RTOL * top + 64 * np.finfo(float).eps * matrix.shape[0] * scale
    if floor < -tol:
        raise NumericalError(
            "covariance estimate is not positive semi-definite",
            {"max_eigenvalue": top, "min_eigenvalue": floor,
             "condition": top / abs(floor)},
        )
    return SpectralOperator(np.clip(vals, 0.0, None), vecs, mode)


def _half_centering(s: int) -> np.ndarray:
    """``sqrt(s / (s - 1)) (I - 11^T / s)``, the root of the scaled centering matrix."""
    h = np.eye(s) - np.full((s, s), 1.0 / s)
    return np.sqrt(s / (s - 1.0)) * h


def gram_operator(kernel, z) -> SpectralOperator:
    """Eigensystem of ``(1/s) H~^{1/2} K_s H~^{1/2}`` for the covariance sample."""
    z = check_matrix(z, "z", min_rows=2)
    s = z.shape[0]
    hh = _half_centering(s)
    k_s = kernel.gram(z, z)
    scale = float(np.abs(k_s).max())
    return _symmetric_eigensystem(hh @ k_s @ hh / s, OperatorMode.GRAM_SIDE, scale)


def feature_operator(phi_z: np.ndarray) -> SpectralOperator:
    """Eigensystem of the U-statistic covariance estimate in feature space.

    The estimate equals ``C C^T`` with ``C = Phi(Z) H~^{1/2} / sqrt(s)``. When
    the feature dimension ``2 l`` exceeds ``s`` the thin SVD of ``C`` gives the
    nonzero part of the spectrum at ``O(l s^2)`` cost; otherwise the ``2l x 2l``
    matrix is decomposed directly.
    """
    p, s = phi_z.shape
    if p > s:
        c = phi_z @ _half_centering(s) / np.sqrt(s)
        try:
            u, sing, _ = np.linalg.svd(c, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD failed: {exc}", {"shape": c.shape}) from exc
        return SpectralOperator(sing * sing, u, OperatorMode.FEATURE_SIDE)
    v = phi_z.sum(axis=1)
    cov = (s * (phi_z @ phi_z.T) - np.outer(v, v)) / (s * (s - 1.0))
    scale = float(np.max(np.sum(phi_z * phi_z, axis=0)))
    return _symmetric_eigensystem(cov, OperatorMode.FEATURE_SIDE, scale)


def exact_statistic(kernel, reg: Regularizer, split: SplitData) -> float:
    """Spectral-regularized statistic from kernel matrices.

    ``kernel`` is anything with a ``gram(A, B)`` method, normally a
    :class:`~spectral_mmd.kernels.Kernel`.
    """
    x, y, z = split.x_main, split.y_main, split.z
    n, m, s = split.n, split.m, split.s
    op = gram_operator(kernel, z)
    g0 = reg.at_zero()
    hh = _half_centering(s)
    inner = hh @ op.gram_weights(reg) @ hh / s

    k_ns = kernel.gram(x, z)
    k_ms = kernel.gram(y, z)
    a1 = g0 * kernel.gram(x, x) + k_ns @ inner @ k_ns.T
    a2 = g0 * kernel.gram(y, y) + k_ms @ inner @ k_ms.T
    cross = g0 * kernel.gram(y, x) + k_ms @ inner @ k_ns.T

    t1, t2 = a1.sum(), np.trace(a1)
    t3, t4 = a2.sum(), np.trace(a2)
    t5 = cross.sum()
    return float((t1 - t2) / (n * (n - 1)) + (t3 - t4) / (m * (m - 1)) - 2.0 * t5 / (n * m))


def rff_statistic(freqs: FrequencySet, reg: Regularizer, split: SplitData) -> float:
    """Spectral-regularized statistic in random-feature space (cost linear in n, m, s)."""
    if freqs.d != split.d:
        raise ValueError(f"dimension mismatch: frequencies d={freqs.d}, data d={split.d}")
    n, m = split.n, split.m
    op = feature_operator(feature_matrix(freqs, split.z))
    psi_x = op.apply_root(reg, feature_matrix(freqs, split.x_main))
    psi_y = op.apply_root(reg, feature_matrix(freqs, split.y_main))
    v_x = psi_x.sum(axis=1)
    v_y = psi_y.sum(axis=1)
    a = v_x @ v_x - np.sum(psi_x * psi_x)
    b = v_y @ v_y - np.sum(psi_y * psi_y)
    c = v_x @ v_y
    return float(a / (n * (n - 1)) + b / (m * (m - 1)) - 2.0 * c / (n * m))


def effective_dims(eigvals, lam: float) -> tuple[float, float]:
    """Effective dimensions ``(N1, N2)`` of a spectrum at regularization ``lam``.

    ``N1 = sum r_i`` and ``N2 = sqrt(sum r_i^2)`` with ``r_i = l_i / (l_i + lam)``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    vals = np.clip(np.asarray(eigvals, dtype=float), 0.0, None)
    r = vals / (vals + lam)
    return float(r.sum()), float(np.sqrt(np.sum(r * r)))


def selection_matrix(masks, n: int, m: int) -> np.ndarray:
    """Validate relabeling masks and return them as a float ``(n + m) x B`` matrix."""
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 1:
        masks = masks[None, :]
    if masks.shape[1] != n + m:
        raise ValueError(f"masks must have {n + m} columns, got {masks.shape[1]}")
    if np.any(masks.sum(axis=1) != n):
        raise ValueError(f"every mask must select exactly n={n} rows for the first sample")
    return np.ascontiguousarray(masks.T, dtype=float)


def _combine(a, b, c, n, m):
    return a / (n * (n - 1)) + b / (m * (m - 1)) - 2.0 * c / (n * m)


class RFFStatisticBatch:
    """Random-feature statistics for many relabelings and regularizers.

    The feature-space operator depends only on ``z`` and the frequencies, so
    each relabeling only reassigns columns of the pooled sample
    ``U = [x_main; y_main]``. With ``G = g^(1/2)`` of the covariance and ``V``
    its eigenvectors, every inner product the statistic needs has the form
    ``<G a, G b> = g(0) <a, b> + sum_i (g(l_i) - g(0)) (V^T a)_i (V^T b)_i``,
    so the projections ``V^T Phi(U)`` are shared by all regularizers.
    """

    def __init__(self, freqs: FrequencySet, regs: Sequence[Regularizer], split: SplitData):
        if freqs.d != split.d:
            raise ValueError(f"dimension mismatch: frequencies d={freqs.d}, data d={split.d}")
        self.n, self.m = split.n, split.m
        self.regs = list(regs)
        self.phi_u = feature_matrix(freqs, split.pooled)  # 2l x N
        self.operator = feature_operator(feature_matrix(freqs, split.z))
        vecs = self.operator.eigvecs
        self.g0 = np.array([r.at_zero() for r in self.regs])  # L
        self.w = np.stack([r(self.operator.eigvals) for r in self.regs]) - self.g0[:, None]  # L x r
        self.proj = vecs.T @ self.phi_u  # r x N
        # squared norms of G phi_j for every pooled column j
        self.col_sq = self.g0[:, None] * np.sum(self.phi_u**2, axis=0) + self.w @ self.proj**2  # L x N
        self.t0 = self.phi_u.sum(axis=1)  # 2l
        self.qt = self.proj.sum(axis=1)  # r
        self.tt = self.g0 * (self.t0 @ self.t0) + self.w @ self.qt**2  # L

    def evaluate(self, masks) -> np.ndarray:
        """Statistics, shape ``(len(regs), len(masks))``.

        ``masks[b]`` marks which pooled rows form the first sample.
        """
        return self._evaluate(selection_matrix(masks, self.n, self.m))

    def _evaluate(self, e: np.ndarray) -> np.ndarray:
        phi_e = self.phi_u @ e  # 2l x B
        q_e = self.proj @ e  # r x B
        xx = self.g0[:, None] * np.sum(phi_e**2, axis=0) + self.w @ q_e**2  # |v_X|^2
        xt = self.g0[:, None] * (self.t0 @ phi_e) + self.w @ (self.qt[:, None] * q_e)  # <v_X, v_X + v_Y>
        diag_x = self.col_sq @ e
        diag_y = self.col_sq.sum(axis=1, keepdims=True) - diag_x
        a = xx - diag_x
        b = self.tt[:, None] - 2.0 * xt + xx - diag_y
        c = xt - xx
        return _combine(a, b, c, self.n, self.m)


class ExactStatisticBatch:
    """Kernel-matrix statistics for many relabelings and regularizers.

    With pooled Gram matrix ``K`` and ``R = K_Us H~^{1/2}``, the statistic for a
    relabeling is a combination of quadratic forms of the selection vector in
    ``K`` and in ``R W R^T / s``. ``K e`` is shared by all regularizers.
    """

    def __init__(self, kernel, regs: Sequence[Regularizer], split: SplitData):
        self.n, self.m = split.n, split.m
        s = split.s
        self.regs = list(regs)
        pooled = split.pooled
        self.k = kernel.gram(pooled, pooled)
        self.k_rowsum = self.k.sum(axis=1)
        self.k_total = self.k_rowsum.sum()
        k_diag = np.diag(self.k).copy()
        self.operator = gram_operator(kernel, split.z)
        hh = _half_centering(s)
        self.r = kernel.gram(pooled, split.z) @ hh  # N x s
        self.r_total = self.r.sum(axis=0)
        self.g0 = np.array([r.at_zero() for r in self.regs])[:, None]
        self.w = np.stack([self.operator.gram_weights(r) / s for r in self.regs])  # L x s x s
        self.w_total = self.w @ self.r_total  # L x s
        self.diag = self.g0 * k_diag + np.sum((self.r @ self.w) * self.r, axis=2)

    def evaluate(self, masks) -> np.ndarray:
        """Statistics, shape ``(len(regs), len(masks))``."""
        return self._evaluate(selection_matrix(masks, self.n, self.m))

    def _evaluate(self, e: np.ndarray) -> np.ndarray:
        ke = self.k @ e
        k_xx = np.sum(e * ke, axis=0)
        k_x = self.k_rowsum @ e
        k_yx = k_x - k_xx
        k_yy = self.k_total - 2.0 * k_x + k_xx
        re = self.r.T @ e  # s x B
        diag_x = self.diag @ e
        diag_y = self.diag.sum(axis=1, keepdims=True) - diag_x
        wre = self.w @ re  # L x s x B
        r_xx = np.einsum("sb,ksb->kb", re, wre)
        r_x = self.w_total @ re  # L x B
        r_yx = r_x - r_xx
        r_yy = (self.w_total @ self.r_total)[:, None] - 2.0 * r_x + r_xx
        a = self.g0 * k_xx + r_xx - diag_x
        b = self.g0 * k_yy + r_yy - diag_y
        c = self.g0 * k_yx + r_yx
        return _combine(a, b, c, self.n, self.m)
