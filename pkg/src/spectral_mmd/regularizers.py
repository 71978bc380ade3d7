"""Spectral regularizers ``g_lambda`` applied to covariance eigenvalues."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RegFamily",
    "Regularizer",
    "ContractReport",
    "check_contract",
    "default_lambda_grid",
    "parse_lambda_grid",
]

# below this multiple of lambda Showalter switches to its Taylor series
_SHOWALTER_SERIES_CUTOFF = 1e-8


class RegFamily(str, enum.Enum):
    TIKHONOV = "tikhonov"
    SHOWALTER = "showalter"
    IDENTITY = "identity"


@dataclass(frozen=True)
class Regularizer:
    """Spectral function ``g_lambda``.

    ``tikhonov``: ``1 / (x + lambda)``.
    ``showalter``: ``(1 - exp(-x / lambda)) / x``, with value ``1 / lambda`` at 0.
    ``identity``: constant 1; reduces the spectral statistic to plain MMD and
    exists mainly as a cross-check. It ignores ``lam``.
    """

    family: RegFamily
    lam: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", RegFamily(self.family))
        lam = float(self.lam)
        if not math.isfinite(lam) or lam <= 0:
            raise ValueError(f"lambda must be positive and finite, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)

    def with_lambda(self, lam: float) -> "Regularizer":
        return Regularizer(self.family, lam)

    def __call__(self, x):
        """Evaluate ``g_lambda`` elementwise on nonnegative ``x``."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0) or np.any(np.isnan(arr)):
            raise ValueError("g_lambda is only defined for x >= 0")
        lam = self.lam
        if self.family is RegFamily.IDENTITY:
            out = np.ones_like(arr)
        elif self.family is RegFamily.TIKHONOV:
            out = 1.0 / (arr + lam)
        else:
            t = arr / lam
            small = t < _SHOWALTER_SERIES_CUTOFF
            with np.errstate(divide="ignore", invalid="ignore"):
                direct = -np.expm1(-t) / arr
            series = (1.0 - t / 2.0 + t * t / 6.0) / lam
            out = np.where(small, series, direct)
        return float(out) if out.ndim == 0 else out

    def at_zero(self) -> float:
        if self.family is RegFamily.IDENTITY:
            return 1.0
        return 1.0 / self.lam

    @property
    def name(self) -> str:
        return self.family.value


def eval_g(reg: Regularizer, x):
    return reg(x)


@dataclass(frozen=True)
class ContractReport:
    C1: float
    C2: float
    C4: float
    passed: bool


def check_contract(reg: Regularizer, kappa: float = 1.0, grid_size: int = 200) -> ContractReport:
    """Empirical constants for the regularizer bounds on ``[0, kappa]``.

    Reports ``C1 = sup x g(x)``, ``C2 = sup lambda g(x)`` and
    ``C4 = inf g(x) (x + lambda)`` over a log-spaced grid (plus ``x = 0``), and
    whether ``C1 <= 1``, ``C2 <= 1`` and ``C4 >= 1 - 1/e``.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if grid_size < 10:
        raise ValueError("grid_size must be at least 10")
    x = np.concatenate([[0.0], kappa * np.logspace(-12, 0, grid_size)])
    g = reg(x)
    lam = reg.lam
    c1 = float(np.max(np.abs(x * g)))
    c2 = float(np.max(np.abs(lam * g)))
    c4 = float(np.min(g * (x + lam)))
    tol = 1e-12
    passed = c1 <= 1.0 + tol and c2 <= 1.0 + tol and c4 >= 1.0 - math.exp(-1.0) - tol
    return ContractReport(c1, c2, c4, passed)


def default_lambda_grid() -> list[float]:
    """Regularization values ``10**(-6 + 0.75 i)`` for ``i = 0..9``."""
    return [10.0 ** (-6 + 0.75 * i) for i in range(10)]


def parse_lambda_grid(text: str) -> list[float]:
    """Parse ``lambda=<grid>`` (the ``lambda=`` prefix is optional)."""
    from .kernels import parse_grid

    text = text.strip()
    if text.startswith("lambda="):
        text = text[len("lambda="):]
    values = parse_grid(text)
    if any(v <= 0 for v in values):
        raise ValueError("lambda values must be positive")
    return values
