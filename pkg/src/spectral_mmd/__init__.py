"""Spectral-regularized MMD two-sample tests with random Fourier features."""

from .data import (
    GENERATORS,
    CSVFormatError,
    TwoSampleData,
    gen_cauchy_median_shift,
    gen_gaussian_mean_shift,
    gen_gaussian_scale_shift,
    generate,
    load_csv,
    write_csv,
)
from .estimator import SpectralMMDTest
from .features import (
    FrequencySet,
    RandomFourierFeatures,
    approx_kernel,
    feature_matrix,
    sample_frequencies,
)
from .kernels import Kernel, KernelFamily, gaussian, laplace, parse_kernel_spec
from .permutation import (
    PermutationPlan,
    TestReport,
    adaptive_test,
    empirical_quantile,
    exact_adaptive_test,
    permuted_statistics,
    single_test,
)
from .regularizers import RegFamily, Regularizer, check_contract, default_lambda_grid
from .statistics import (
    NumericalError,
    SplitData,
    effective_dims,
    exact_statistic,
    mmd_u,
    rff_statistic,
    split,
)

__version__ = "0.1.0"

__all__ = [
    "CSVFormatError",
    "FrequencySet",
    "GENERATORS",
    "Kernel",
    "KernelFamily",
    "NumericalError",
    "PermutationPlan",
    "RandomFourierFeatures",
    "RegFamily",
    "Regularizer",
    "SpectralMMDTest",
    "SplitData",
    "TestReport",
    "TwoSampleData",
    "adaptive_test",
    "approx_kernel",
    "check_contract",
    "default_lambda_grid",
    "effective_dims",
    "empirical_quantile",
    "exact_adaptive_test",
    "exact_statistic",
    "feature_matrix",
    "gaussian",
    "gen_cauchy_median_shift",
    "gen_gaussian_mean_shift",
    "gen_gaussian_scale_shift",
    "generate",
    "laplace",
    "load_csv",
    "mmd_u",
    "parse_kernel_spec",
    "permuted_statistics",
    "rff_statistic",
    "sample_frequencies",
    "single_test",
    "split",
    "write_csv",
]
