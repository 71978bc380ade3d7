import numpy as np
import pytest
from scipy import stats

from conftest import random_split
from spectral_mmd._rng import PERMUTATION, SPLIT, derive_seed
from spectral_mmd.data import gen_gaussian_mean_shift
from spectral_mmd.features import sample_frequencies
from spectral_mmd.kernels import default_bandwidth_grid, gaussian, laplace
from spectral_mmd.permutation import (
    PermutationPlan,
    adaptive_test,
    empirical_quantile,
    exact_adaptive_test,
    identity_mask,
    masks_from_permutations,
    permutation_pvalue,
    permuted_statistics,
    single_test,
    theoretical_min_permutations,
)
from spectral_mmd.regularizers import RegFamily, Regularizer, default_lambda_grid
from spectral_mmd.statistics import SplitData, exact_statistic, rff_statistic, split

REG = Regularizer(RegFamily.SHOWALTER, 1e-3)


def h0_split(seed, N, s, d=1):
    data = gen_gaussian_mean_shift(d, 0.0, N, N, seed)
    return split(data.x, data.y, s, derive_seed(seed, SPLIT))


class TestPlan:
    def test_masks_select_n(self):
        plan = PermutationPlan(50, 3, 7, 5)
        masks = plan.masks()
        assert masks.shape == (50, 12)
        np.testing.assert_array_equal(masks.sum(axis=1), 7)

    def test_masks_agree_with_permutations(self):
        plan = PermutationPlan(20, 3, 6, 9)
        np.testing.assert_array_equal(plan.masks(), masks_from_permutations(plan.permutations(), 6))

    def test_replica_depends_only_on_seed_and_index(self):
        short, long = PermutationPlan(10, 5, 8, 8), PermutationPlan(40, 5, 8, 8)
        np.testing.assert_array_equal(short.permutations(), long.permutations()[:10])

    def test_uniform_inclusion(self):
        masks = PermutationPlan(20_000, 1, 3, 5).masks()
        freq = masks.mean(axis=0)
        np.testing.assert_allclose(freq, 3 / 8, atol=0.015)

    def test_digest_stable(self):
        plan = PermutationPlan(30, 2, 4, 4)
        assert PermutationPlan.digest(plan.masks()) == PermutationPlan.digest(plan.masks())
        other = PermutationPlan(30, 3, 4, 4)
        assert PermutationPlan.digest(plan.masks()) != PermutationPlan.digest(other.masks())

    def test_validation(self):
        with pytest.raises(ValueError):
            PermutationPlan(0, 1, 4, 4)


class TestQuantile:
    def test_examples(self):
        assert empirical_quantile([1, 2, 3, 4], 0.75) == 3
        assert empirical_quantile([4, 3, 2, 1], 0.5) == 2
        assert empirical_quantile([5, 5, 5], 0.37) == 5

    def test_exact_multiple_is_not_rounded_up(self):
        # 0.95 * 600 is 570.0000000000001 in floating point
        values = np.arange(1.0, 601.0)
        assert empirical_quantile(values, 0.95) == 570.0

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_quantile([], 0.5)

    def test_definition(self, rng):
        values = rng.standard_normal(37)
        for level in (0.01, 0.3, 0.5, 0.9, 0.999, 1.0):
            q = empirical_quantile(values, level)
            assert np.mean(values <= q) >= level
            below = values[values < q]
            assert below.size == 0 or np.mean(values <= below.max()) < level

    def test_pvalue(self):
        assert permutation_pvalue(3.0, [1.0, 2.0, 3.0, 4.0]) == pytest.approx(3 / 5)


class TestPermutedStatistics:
    @pytest.mark.parametrize("path", ["exact", "rff"])
    def test_identity_replica(self, rng, path):
        part = random_split(rng, 9, 9, 6, 2, shift=0.5)
        target = gaussian(1.0) if path == "exact" else sample_frequencies(gaussian(1.0), 4, 2, seed=0)
        fn = exact_statistic if path == "exact" else rff_statistic
        perms = np.arange(18)[None, :]
        value = permuted_statistics(target, REG, part, permutations=perms)[0]
        assert value == pytest.approx(fn(target, REG, part), rel=1e-12)

    @pytest.mark.parametrize("path", ["exact", "rff"])
    def test_block_swap(self, rng, path):
        part = random_split(rng, 7, 7, 5, 1, shift=0.5)
        target = laplace(1.0) if path == "exact" else sample_frequencies(laplace(1.0), 3, 1, seed=0)
        swap = np.concatenate([np.arange(7, 14), np.arange(7)])[None, :]
        ident = np.arange(14)[None, :]
        a = permuted_statistics(target, REG, part, permutations=swap)[0]
        b = permuted_statistics(target, REG, part, permutations=ident)[0]
        assert a == pytest.approx(b, abs=1e-12)

    def test_plan_size_mismatch(self, small_split):
        with pytest.raises(ValueError, match="do not match"):
            permuted_statistics(gaussian(1.0), REG, small_split, PermutationPlan(5, 0, 3, 3))

    def test_rank_uniform_under_h0(self):
        ranks = []
        for trial in range(100):
            part = h0_split(trial, 30, 6)
            plan = PermutationPlan(200, derive_seed(trial, PERMUTATION), part.n, part.m)
            freqs = sample_frequencies(gaussian(1.0), 5, 1, seed=trial)
            out = single_test(freqs, REG, part, plan)
            below = np.sum(out["replicas"] < out["statistic"])
            ties = np.sum(out["replicas"] == out["statistic"])
            jitter = np.random.default_rng(trial).uniform()
            ranks.append((below + jitter * (ties + 1)) / 201)
        assert stats.kstest(ranks, "uniform").pvalue > 0.01


class TestSingleTest:
    def test_degenerate_constant_data(self):
        row = np.array([[0.5]])
        part = SplitData.from_parts(np.repeat(row, 6, 0), np.repeat(row, 6, 0), np.repeat(row, 4, 0))
        out = single_test(gaussian(1.0), REG, part, PermutationPlan(30, 0, 6, 6))
        assert out["reject"] and out["degenerate"]

    def test_stat_below_all_replicas(self, small_split):
        plan = PermutationPlan(50, 1, small_split.n, small_split.m)
        out = single_test(gaussian(1.0), REG, small_split, plan)
        if out["statistic"] < out["replicas"].min():
            assert not out["reject"]
        assert out["reject"] == (out["statistic"] >= out["quantile"])

    def test_monotone_in_alpha(self, rng):
        part = random_split(rng, 20, 20, 6, 1, shift=0.6)
        plan = PermutationPlan(100, 2, part.n, part.m)
        decisions = [single_test(gaussian(1.0), REG, part, plan, alpha)["reject"]
                     for alpha in (0.01, 0.05, 0.1, 0.3, 0.6)]
        assert decisions == sorted(decisions)

    def test_pvalue_rule(self, rng):
        part = random_split(rng, 20, 20, 6, 1, shift=2.0)
        plan = PermutationPlan(99, 2, part.n, part.m)
        out = single_test(gaussian(1.0), REG, part, plan, 0.05, rule="pvalue")
        assert out["reject"] == (out["pvalue"] <= 0.05)

    def test_deflation(self, rng):
        part = random_split(rng, 20, 20, 6, 1, shift=0.3)
        plan = PermutationPlan(200, 2, part.n, part.m)
        full = single_test(gaussian(1.0), REG, part, plan, 0.2)
        deflated = single_test(gaussian(1.0), REG, part, plan, 0.2, w=0.25)
        assert deflated["quantile"] >= full["quantile"]

    def test_level_simulation(self):
        rejections = 0
        trials = 400
        for trial in range(trials):
            part = h0_split(trial, 60, 8)
            plan = PermutationPlan(300, derive_seed(trial, PERMUTATION), part.n, part.m)
            freqs = sample_frequencies(gaussian(1.0), 5, 1, seed=trial)
            rejections += single_test(freqs, REG, part, plan, 0.05)["reject"]
        assert 0.02 <= rejections / trials <= 0.10


class TestAdaptive:
    def test_single_cell_matches_single_test(self, rng):
        part = random_split(rng, 25, 25, 8, 1, shift=0.5)
        plan = PermutationPlan(120, 4, part.n, part.m)
        kernel = gaussian(0.8)
        report = adaptive_test([1e-3], [kernel], 5, part, plan, 0.05, RegFamily.SHOWALTER, seed=11)
        freqs = sample_frequencies(kernel, 5, 1, report.seeds["frequencies"][0])
        single = single_test(freqs, REG, part, plan, 0.05)
        cell = report.cells[0]
        assert cell.statistic == pytest.approx(single["statistic"], rel=1e-12)
        assert cell.quantile == pytest.approx(single["quantile"], rel=1e-12)
        assert report.reject == single["reject"]
        assert report.corrected_alpha == 0.05

    def test_exact_single_cell(self, rng):
        part = random_split(rng, 15, 15, 6, 2, shift=0.5)
        plan = PermutationPlan(60, 4, part.n, part.m)
        report = exact_adaptive_test([1e-3], [laplace(1.0)], part, plan)
        single = single_test(laplace(1.0), REG, part, plan)
        assert report.cells[0].statistic == pytest.approx(single["statistic"], rel=1e-10)
        assert report.reject == single["reject"]

    def test_report_structure(self, rng):
        part = random_split(rng, 20, 20, 6, 1, shift=0.5)
        plan = PermutationPlan(100, 4, part.n, part.m)
        lams, kernels = [1e-4, 1e-2, 1.0], default_bandwidth_grid()[:4]
        report = adaptive_test(lams, kernels, 3, part, plan, 0.05)
        assert len(report.cells) == 12
        assert report.corrected_alpha == pytest.approx(0.05 / 12)
        assert report.reject == any(report.per_cell_reject.values())
        assert set(report.observed) == {(lam, k.spec) for lam in lams for k in kernels}
        assert len(set(report.permutation_digests.values())) == 1
        assert len(report.seeds["frequencies"]) == 4
        assert set(report.timing_ms) >= {"setup", "statistics", "decisions", "total"}
        assert any("too small" in w for w in report.warnings)

    def test_identity_replica_is_observed(self, rng):
        part = random_split(rng, 12, 12, 5, 1, shift=0.5)
        plan = PermutationPlan(40, 4, part.n, part.m)
        report = adaptive_test([1e-2], [gaussian(1.0)], 4, part, plan)
        freqs = sample_frequencies(gaussian(1.0), 4, 1, report.seeds["frequencies"][0])
        assert report.cells[0].statistic == pytest.approx(rff_statistic(freqs, REG.with_lambda(1e-2), part), rel=1e-10)

    def test_threads_do_not_change_report(self, rng):
        part = random_split(rng, 30, 30, 8, 2, shift=0.3)
        plan = PermutationPlan(80, 4, part.n, part.m)
        lams, kernels = default_lambda_grid(), default_bandwidth_grid()
        one = adaptive_test(lams, kernels, 5, part, plan, n_jobs=1).to_dict(timing=False)
        many = adaptive_test(lams, kernels, 5, part, plan, n_jobs=4).to_dict(timing=False)
        assert one == many

    def test_theoretical_bound_warning(self, rng):
        part = random_split(rng, 12, 12, 5, 1)
        plan = PermutationPlan(50, 4, part.n, part.m)
        report = adaptive_test([1e-2], [gaussian(1.0)], 2, part, plan, 0.05, w=0.4)
        assert any("finite-sample bound" in w for w in report.warnings)
        quiet = adaptive_test([1e-2], [gaussian(1.0)], 2, part, plan, 0.05)
        assert not any("finite-sample bound" in w for w in quiet.warnings)

    def test_min_permutations_formula(self):
        bound = theoretical_min_permutations(0.05, 10, 0.4, 0.2)
        expected = 100 / (2 * 0.04 * 0.0025) * np.log(20 / (0.05 * 0.4))
        assert bound == int(np.ceil(expected))

    @pytest.mark.parametrize("bad", [dict(l=-1), dict(lambdas=[]), dict(alpha=1.5)])
    def test_invalid(self, rng, bad):
        part = random_split(rng, 10, 10, 4, 1)
        plan = PermutationPlan(20, 0, part.n, part.m)
        args = dict(lambdas=[0.1], kernels=[gaussian(1.0)], l=3, split=part, plan=plan, alpha=0.05)
        args.update(bad)
        with pytest.raises(ValueError):
            adaptive_test(**args)

    def test_identity_mask(self):
        np.testing.assert_array_equal(identity_mask(2, 3), [True, True, False, False, False])

    @pytest.mark.xfail(reason="Monte Carlo error of K_l at l=4096 is amplified by g_lambda at small "
                              "lambda; about 70-80% of cells fall within 5%", strict=False)
    def test_large_l_approaches_exact(self):
        data = gen_gaussian_mean_shift(1, 1.0, 40, 40, 0)
        part = split(data.x, data.y, 10, 0)
        plan = PermutationPlan(10, 1, part.n, part.m)
        lams, kernels = default_lambda_grid(), default_bandwidth_grid()
        rff = np.array([c.statistic for c in adaptive_test(lams, kernels, 4096, part, plan).cells])
        exact = np.array([c.statistic for c in exact_adaptive_test(lams, kernels, part, plan).cells])
        close = np.abs(rff - exact) <= 0.05 * np.abs(exact)
        assert close.mean() >= 0.9
