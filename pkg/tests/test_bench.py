import csv
import json
import math

import pytest

from spectral_mmd.bench import (
    POWER_HEADER,
    ConfigError,
    ExperimentConfig,
    binomial_band,
    run_power,
    run_timing,
    statistic_time,
    write_power_csv,
    write_timing_csv,
)

BASE = {
    "generator": {"family": "gaussian_mean", "param_grid": [0.0]},
    "dims": [1],
    "N": 40,
    "M": 40,
    "s": 6,
    "alpha": 0.05,
    "B_rff": 60,
    "B_exact": 40,
    "l_grid": [3],
    "kernel_grid": "gaussian:h=0.5,2",
    "lambda_grid": [1e-3, 1e-1],
    "n_sims": 2,
    "n_rff_redraws": 2,
}


def config(**changes):
    data = dict(BASE)
    data.update(changes)
    return ExperimentConfig.from_dict(data)


class TestConfig:
    def test_shipped_config_file(self):
        cfg = ExperimentConfig.from_json("configs/gauss_mean_shift.json")
        assert cfg.l_grid == [1, 3, 5, 7, 9]
        assert cfg.generator["param_grid"] == [0.0, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0]
        assert cfg.dims == [1, 10, 20, 50, 100]
        assert (cfg.N, cfg.M, cfg.s, cfg.B_rff, cfg.B_exact) == (200, 200, 20, 600, 250)
        assert len(cfg.kernels()) == 9 and len(cfg.lambdas()) == 10

    def test_malformed_json_location(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "N": 10,\n  "M": \n}')
        with pytest.raises(ConfigError, match="line 4, column 1"):
            ExperimentConfig.from_json(path)

    @pytest.mark.parametrize("change,match", [
        (dict(dims=[]), "dims"),
        (dict(n_sims=0), "n_sims"),
        (dict(l_grid=[-1]), "l_grid"),
        (dict(generator={"family": "uniform", "param_grid": [0]}), "gaussian_mean"),
        (dict(kernel_grid="cosine:h=1"), "family"),
        (dict(timing_repeats=2), "timing_repeats"),
        (dict(bogus=1), "unknown"),
    ])
    def test_invalid(self, change, match):
        with pytest.raises(ConfigError, match=match):
            config(**change)

    def test_missing_field(self):
        data = dict(BASE)
        del data["N"]
        with pytest.raises(ConfigError, match="missing.*N"):
            ExperimentConfig.from_dict(data)


class TestPower:
    def test_one_trial_per_row(self):
        rows = run_power(config(n_sims=1, n_rff_redraws=1, l_grid=[0, 2]))
        assert [r.n_trials for r in rows] == [1, 1]

    def test_row_layout_and_counts(self):
        cfg = config(generator={"family": "gaussian_mean", "param_grid": [0.0, 1.0]}, dims=[1, 2],
                     l_grid=[0, 3])
        rows = run_power(cfg)
        assert len(rows) == 2 * 2 * 2
        assert [(r.param, r.d, r.l) for r in rows][:3] == [(0.0, 1, 0), (0.0, 1, 3), (0.0, 2, 0)]
        for r in rows:
            assert r.n_trials == (cfg.n_sims * cfg.n_rff_redraws if r.l > 0 else cfg.n_sims)
            assert r.rejection_rate == r.rejections / r.n_trials

    def test_reproducible_and_thread_independent(self):
        cfg = config(l_grid=[0, 3], generator={"family": "gaussian_mean", "param_grid": [0.0, 0.7]})
        first = [r.to_record(timing=False) for r in run_power(cfg)]
        again = [r.to_record(timing=False) for r in run_power(cfg, threads=4)]
        assert first == again

    def test_infeasible_split_is_a_row_error(self):
        rows = run_power(config(s=39, l_grid=[0, 3]))
        assert len(rows) == 2
        assert all(r.error and "infeasible" in r.error for r in rows)
        assert all(math.isnan(r.rejection_rate) for r in rows)

    def test_h0_rate_in_binomial_band(self):
        cfg = config(N=50, M=50, s=8, B_rff=200, n_sims=40, n_rff_redraws=1, l_grid=[3],
                     kernel_grid="gaussian:h=1", lambda_grid=[1e-2])
        row = run_power(cfg)[0]
        assert 0 <= row.rejection_rate <= binomial_band(cfg.alpha, row.n_trials)

    def test_csv(self, tmp_path):
        rows = run_power(config(l_grid=[0, 3]))
        path = tmp_path / "power.csv"
        write_power_csv(path, rows)
        with path.open() as fh:
            records = list(csv.reader(fh))
        assert records[0] == POWER_HEADER
        assert len(records) == 1 + len(rows)
        assert float(records[1][4]) == rows[0].rejection_rate


class TestTiming:
    def test_self_ratio(self):
        rows = run_timing(config(l_grid=[0], N=60, M=60, kernel_grid="gaussian:h=logspace(-1,1,3)"))
        assert rows[0]["l"] == 0
        assert 0.8 <= rows[0]["time_ratio"] <= 1.25

    def test_csv(self, tmp_path):
        path = tmp_path / "t.csv"
        write_timing_csv(path, [{"l": 0, "time_ratio": 1.0}, {"l": 9, "time_ratio": 0.4}])
        assert path.read_text() == "l,time_ratio\n0,1.0000\n9,0.4000\n"

    def test_near_linear_scaling(self):
        small = statistic_time(100, 100, 20, 1, 9, 600)
        large = statistic_time(200, 200, 20, 1, 9, 600)
        assert 1.3 <= large / small <= 3.5
