"""Translation-invariant kernels, their spectral distributions and Gram matrices.

Only the Gaussian (RBF) and Laplace families are built in. New families would
need a closed-form ``eval`` plus a spectral sampler whose characteristic
function reproduces the kernel's shape; ``Kernel`` is deliberately a closed
enum so every shipped sampler can be checked against its kernel.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import check_matrix, check_same_dim

__all__ = [
    "KernelFamily",
    "Kernel",
    "gaussian",
    "laplace",
    "parse_kernel_spec",
    "parse_grid",
    "default_bandwidth_grid",
]


class KernelFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


@dataclass(frozen=True)
class Kernel:
    """A translation-invariant kernel with bandwidth ``h``.

    Gaussian: ``exp(-||x - y||_2^2 / (2h))``.
    Laplace: ``exp(-||x - y||_1 / h)``.

    Both have value 1 at zero lag, so ``v0 == 1``.
    """

    family: KernelFamily
    h: float

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        h = float(self.h)
        if not math.isfinite(h) or h <= 0:
            raise ValueError(f"bandwidth h must be positive and finite, got {self.h!r}")
        object.__setattr__(self, "h", h)

    @property
    def v0(self) -> float:
        return 1.0

    @property
    def spec(self) -> str:
        return f"{self.family.value}:h={self.h!r}"

    def __str__(self):
        return self.spec

    def eval(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if x.ndim != 1 or y.ndim != 1:
            raise ValueError("eval expects two vectors")
        if x.shape != y.shape:
            raise ValueError(
                f"dimension mismatch: x has d={x.shape[0]}, y has d={y.shape[0]}"
            )
        # same arithmetic as gram so the two agree bit for bit
        return float(self.gram(x[None, :], y[None, :])[0, 0])

    def gram(self, A, B=None) -> np.ndarray:
        """Dense kernel matrix with entry ``(i, j) = K(A[i], B[j])``."""
        A = check_matrix(A, "A")
        B = A if B is None else check_matrix(B, "B")
        check_same_dim(A, B, "A", "B")
        if self.family is KernelFamily.GAUSSIAN:
            dist = cdist(A, B, "sqeuclidean")
            return np.exp(-dist / (2.0 * self.h))
        dist = cdist(A, B, "cityblock")
        return np.exp(-dist / self.h)

    def spectral_scale(self) -> float:
        """Per-coordinate scale of the spectral distribution.

        Gaussian kernels have normal frequencies with standard deviation
        ``1/sqrt(h)``; Laplace kernels have Cauchy frequencies with scale
        ``1/h``.
        """
        if self.family is KernelFamily.GAUSSIAN:
            return 1.0 / math.sqrt(self.h)
        return 1.0 / self.h

    def sample_spectral(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. frequencies from the kernel's spectral distribution.

        Normals come from a Box-Muller transform and Cauchy variates from
        ``tan(pi * (u - 1/2))``, both driven by raw uniforms so the draws are
        a fixed function of the bit stream.
        """
        size = tuple(np.atleast_1d(size))
        count = int(np.prod(size))
        if self.family is KernelFamily.GAUSSIAN:
            z = box_muller(rng, count)
        else:
            u = rng.random(count)
            z = np.tan(np.pi * (u - 0.5))
        return (self.spectral_scale() * z).reshape(size)


def box_muller(rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` standard normals from pairs of uniforms."""
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count]


def gaussian(h: float) -> Kernel:
    return Kernel(KernelFamily.GAUSSIAN, h)


def laplace(h: float) -> Kernel:
    return Kernel(KernelFamily.LAPLACE, h)


_LOGSPACE = re.compile(
    r"^logspace\(\s*([^,]+?)\s*,\s*([^,]+?)\s*,\s*(\d+)\s*\)$"
)


def parse_grid(text: str) -> list[float]:
    """Parse a numeric grid.

    Accepts a single float, a comma-separated list, or ``logspace(a,b,k)``
    which follows :func:`numpy.logspace` (``k`` points from ``10**a`` to
    ``10**b``).

    >>> parse_grid("logspace(-2,2,9)")[:2]
    [0.01, 0.03162277660168379]
    """
    text = text.strip()
    match = _LOGSPACE.match(text)
    if match:
        start, stop, num = float(match[1]), float(match[2]), int(match[3])
        if num < 1:
            raise ValueError(f"logspace needs at least one point: {text!r}")
        exponents = np.linspace(start, stop, num)
        return [float(10.0**e) for e in exponents]
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValueError(f"cannot parse grid {text!r}") from exc
    if not values:
        raise ValueError("empty grid")
    return values


def parse_kernel_spec(text: str) -> list[Kernel]:
    """Parse ``family:h=<grid>`` into a list of kernels.

    ``gaussian:h=1.5`` gives one kernel; ``gaussian:h=logspace(-2,2,9)`` gives
    the nine-bandwidth grid. Several specs may be joined with ``;``.
    """
    kernels = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        family, sep, rest = part.partition(":")
        if not sep or not rest.startswith("h="):
            raise ValueError(
                f"kernel spec must look like 'gaussian:h=<value>', got {part!r}"
            )
        try:
            fam = KernelFamily(family.strip().lower())
        except ValueError:
            valid = ", ".join(f.value for f in KernelFamily)
            raise ValueError(f"unknown kernel family {family!r}; valid: {valid}") from None
        kernels.extend(Kernel(fam, h) for h in parse_grid(rest[2:]))
    if not kernels:
        raise ValueError("no kernels specified")
    return kernels


def default_bandwidth_grid(family: KernelFamily | str = KernelFamily.GAUSSIAN) -> list[Kernel]:
    """Bandwidths ``10**(-2 + 0.5 i)`` for ``i = 0..8``."""
    fam = KernelFamily(family)
    return [Kernel(fam, 10.0 ** (-2 + 0.5 * i)) for i in range(9)]
