"""Synthetic two-sample problems and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import DATA_X, DATA_Y, philox
from ._validation import check_positive_int
from .kernels import box_muller

__all__ = [
    "TwoSampleData",
    "CSVFormatError",
    "gen_gaussian_mean_shift",
    "gen_gaussian_scale_shift",
    "gen_cauchy_median_shift",
    "GENERATORS",
    "generate",
    "load_csv",
    "write_csv",
    "MEAN_SHIFT_GRID",
    "SCALE_SHIFT_GRID",
]

MEAN_SHIFT_GRID = [0.0, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0]
SCALE_SHIFT_GRID = [10.0**i for i in (0.0, 0.05, 0.10, 0.20, 0.30, 0.40, 0.50)]


@dataclass(frozen=True, eq=False)
class TwoSampleData:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 2:
            raise ValueError("samples must be 2-D")
        if self.x.shape[1] != self.y.shape[1]:
            raise ValueError(
                f"dimension mismatch: x has d={self.x.shape[1]}, y has d={self.y.shape[1]}"
            )
        if self.x.shape[0] < 4 or self.y.shape[0] < 4:
            raise ValueError(
                f"each sample needs at least 4 rows to leave room for splitting, "
                f"got N={self.x.shape[0]}, M={self.y.shape[0]}"
            )
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("samples contain non-finite values")

    @property
    def d(self) -> int:
        return self.x.shape[1]


def _normal(seed, stream, rows, d):
    return box_muller(philox(seed, stream), rows * d).reshape(rows, d)


def _cauchy(seed, stream, rows, d):
    u = philox(seed, stream).random(rows * d)
    return np.tan(np.pi * (u - 0.5)).reshape(rows, d)


def _check_sizes(d, N, M):
    check_positive_int(d, "d")
    check_positive_int(N, "N")
    check_positive_int(M, "M")


def gen_gaussian_mean_shift(d: int, mu: float, N: int, M: int, seed: int) -> TwoSampleData:
    """``x ~ N(0, I)``, ``y ~ N(mu * 1, I)`` (every coordinate shifted)."""
    _check_sizes(d, N, M)
    x = _normal(seed, DATA_X, N, d)
    y = _normal(seed, DATA_Y, M, d) + float(mu)
    return TwoSampleData(x, y)


def gen_gaussian_scale_shift(d: int, sigma2: float, N: int, M: int, seed: int) -> TwoSampleData:
    """``x ~ N(0, I)``, ``y ~ N(0, sigma2 I)``."""
    _check_sizes(d, N, M)
    if not sigma2 >= 1:
        raise ValueError(f"sigma2 must be >= 1, got {sigma2}")
    x = _normal(seed, DATA_X, N, d)
    y = _normal(seed, DATA_Y, M, d) * math.sqrt(sigma2)
    return TwoSampleData(x, y)


def gen_cauchy_median_shift(d: int, mu: float, N: int, M: int, seed: int) -> TwoSampleData:
    """Standard Cauchy coordinates; ``y`` shifted by ``mu`` in every coordinate."""
    _check_sizes(d, N, M)
    x = _cauchy(seed, DATA_X, N, d)
    y = _cauchy(seed, DATA_Y, M, d) + float(mu)
    return TwoSampleData(x, y)


GENERATORS = {
    "gaussian_mean": gen_gaussian_mean_shift,
    "gaussian_scale": gen_gaussian_scale_shift,
    "cauchy_median": gen_cauchy_median_shift,
}


def generate(family: str, param: float, d: int, N: int, M: int, seed: int) -> TwoSampleData:
    try:
        gen = GENERATORS[family]
    except KeyError:
        raise ValueError(
            f"unknown generator family {family!r}; valid: {', '.join(GENERATORS)}"
        ) from None
    return gen(d, param, N, M, seed)


class CSVFormatError(ValueError):
    """Malformed CSV content; carries the file, 1-based row and column."""

    def __init__(self, message, path=None, row=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.path, self.row, self.column = path, row, column


def _read_matrix(path, has_header: bool) -> np.ndarray:
    path = Path(path)
    rows = []
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not record or all(not cell.strip() for cell in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise CSVFormatError(
                    f"expected {width} columns, found {len(record)}", path, lineno
                )
            values = []
            for col, cell in enumerate(record, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CSVFormatError(f"non-numeric value {cell!r}", path, lineno, col) from None
                if not math.isfinite(values[-1]):
                    raise CSVFormatError(f"non-finite value {cell!r}", path, lineno, col)
            rows.append(values)
    if not rows:
        raise CSVFormatError("no data rows", path)
    return np.array(rows, dtype=float)


def load_csv(path_x, path_y, has_header: bool = False) -> TwoSampleData:
    """Read two samples; rows are observations and columns coordinates."""
    x = _read_matrix(path_x, has_header)
    y = _read_matrix(path_y, has_header)
    if x.shape[1] != y.shape[1]:
        raise CSVFormatError(
            f"column count mismatch: {path_x} has d={x.shape[1]}, {path_y} has d={y.shape[1]}"
        )
    return TwoSampleData(x, y)


def write_csv(path, matrix: np.ndarray) -> None:
    """Write one row per observation with round-trip float formatting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(matrix, dtype=float):
            writer.writerow([repr(float(v)) for v in row])
