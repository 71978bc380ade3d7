import numpy as np
import pytest
from sklearn.base import clone

from spectral_mmd import SpectralMMDTest
from spectral_mmd.data import gen_gaussian_mean_shift


@pytest.fixture
def shifted():
    return gen_gaussian_mean_shift(1, 1.0, 100, 100, seed=3)


class TestSpectralMMDTest:
    def test_defaults_follow_experiment_grids(self):
        est = SpectralMMDTest()
        assert est.n_permutations == 600 and est.split_size == 20 and est.n_frequencies == 9

    def test_get_params_and_clone(self):
        est = SpectralMMDTest(n_frequencies=5, alpha=0.1)
        params = clone(est).get_params()
        assert params["n_frequencies"] == 5 and params["alpha"] == 0.1

    def test_fit_attributes(self, shifted):
        est = SpectralMMDTest(n_permutations=200, split_size=10).fit(shifted.x, shifted.y)
        assert est.statistics_.shape == (10, 9)
        assert est.quantiles_.shape == (10, 9)
        assert est.reject_ is est.report_.reject
        assert est.n_features_in_ == 1

    def test_detects_shift(self, shifted):
        assert SpectralMMDTest(n_permutations=200, split_size=10).fit(shifted.x, shifted.y).reject_

    def test_exact_path(self, shifted):
        est = SpectralMMDTest(n_frequencies=0, n_permutations=100, split_size=10,
                              kernels="gaussian:h=0.1,1", lambdas=[1e-3, 1e-1])
        report = est.test(shifted.x, shifted.y)
        assert report.n_frequencies == 0 and len(report.cells) == 4

    def test_deterministic(self, shifted):
        kw = dict(n_permutations=100, split_size=10, random_state=4)
        a = SpectralMMDTest(**kw).fit(shifted.x, shifted.y)
        b = SpectralMMDTest(**kw, n_jobs=3).fit(shifted.x, shifted.y)
        np.testing.assert_array_equal(a.statistics_, b.statistics_)
        np.testing.assert_array_equal(a.quantiles_, b.quantiles_)

    def test_one_dimensional_input(self, shifted):
        est = SpectralMMDTest(n_permutations=50, split_size=10).fit(shifted.x[:, 0], shifted.y[:, 0])
        assert est.n_features_in_ == 1

    @pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(regularizer="ridge"), dict(split_size=99),
                                    dict(kernels="cosine:h=1")])
    def test_invalid(self, shifted, kw):
        with pytest.raises(ValueError):
            SpectralMMDTest(n_permutations=20, **kw).fit(shifted.x, shifted.y)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            SpectralMMDTest().fit(np.zeros((30, 2)), np.zeros((30, 3)))
