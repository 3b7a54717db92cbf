import json
import math

import numpy as np
import pytest

from hfhet.errors import ParameterError
from hfhet.estimators import TuningParams
from hfhet.montecarlo import (
    ExperimentSpec,
    export_qq,
    normal_quantile,
    qq_csv,
    rejection_table,
    report_rows_csv,
    report_to_json_dict,
    run_experiment,
)
from hfhet.simulate import ConstantVol, Heston, ModelSpec


def small_spec(**overrides):
    base = dict(
        model=ModelSpec(ConstantVol()),
        variant="plain",
        n_values=(256,),
        reps=20,
        master_seed=7,
    )
    base.update(overrides)
    return ExperimentSpec(**base)


class TestExperimentSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(reps=0),
            dict(alphas=(1.5,)),
            dict(alphas=()),
            dict(n_values=()),
            dict(n_values=(2,)),
            dict(jump_lambdas=(-1.0,)),
            dict(master_seed=-1),
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ParameterError):
            small_spec(**kwargs)

    def test_scenario_labels(self):
        spec = small_spec(jump_lambdas=(0.0, 20.0))
        labels = [spec.scenario_label(lam, eta) for lam, eta in spec.scenarios()]
        assert labels == ["lambda=0", "lambda=20"]
        spec = small_spec(noise_etas=(0.01,))
        assert [spec.scenario_label(l, e) for l, e in spec.scenarios()] == ["eta=0.01"]
        assert small_spec().scenario_label(None, None) == "base"

    def test_role_follows_model(self):
        assert small_spec().role == "size"
        assert small_spec(model=ModelSpec(Heston())).role == "power"

    def test_zero_lambda_scenario_has_no_jump_overlay(self):
        spec = small_spec(jump_lambdas=(0.0, 10.0))
        assert spec.scenario_model(0.0, None).jump is None
        assert spec.scenario_model(10.0, None).jump.lam == 10.0


class TestRunExperiment:
    def test_single_rep_rate_is_zero_or_one_and_reproducible(self):
        spec = small_spec(reps=1)
        a = run_experiment(spec)
        b = run_experiment(spec)
        for row in a.rows:
            assert row.rate in (0.0, 1.0)
        assert [r.rate for r in a.rows] == [r.rate for r in b.rows]
        for key in a.samples:
            assert np.array_equal(a.samples[key], b.samples[key])

    def test_worker_count_does_not_change_results(self):
        spec = small_spec(reps=24, n_values=(256, 512))
        serial = run_experiment(spec, workers=1)
        parallel = run_experiment(spec, workers=3)
        assert [r.__dict__ for r in serial.rows] == [r.__dict__ for r in parallel.rows]
        for key in serial.samples:
            assert np.array_equal(serial.samples[key], parallel.samples[key])

    def test_rates_nest_across_alphas(self):
        report = run_experiment(small_spec(reps=60, master_seed=3))
        by_alpha = {row.alpha: row.rate for row in report.rows}
        assert by_alpha[0.10] >= by_alpha[0.05] >= by_alpha[0.01]

    def test_scenario_streams_are_independent(self):
        # changing the overlay value of scenario 0 must not move scenario 1
        a = run_experiment(small_spec(jump_lambdas=(10.0, 20.0), variant="truncated", reps=10))
        b = run_experiment(small_spec(jump_lambdas=(50.0, 20.0), variant="truncated", reps=10))
        assert np.array_equal(a.samples["size:lambda=20:n=256"], b.samples["size:lambda=20:n=256"])
        assert not np.array_equal(a.samples["size:lambda=10:n=256"], b.samples["size:lambda=50:n=256"])

    def test_failed_replications_recorded_not_raised(self):
        # n=64 is too small for the pre-averaging windows: every rep fails
        report = run_experiment(small_spec(variant="preaveraged", n_values=(64,), reps=5))
        row = report.rows[0]
        assert row.failures == 5
        assert row.reps == 0
        assert math.isnan(row.rate)

    def test_statistics_match_direct_computation(self):
        from hfhet.het import run_test
        from hfhet.simulate import simulate

        spec = small_spec(reps=3)
        report = run_experiment(spec)
        direct = [
            run_test(
                simulate(spec.model, 256, np.random.SeedSequence(7, spawn_key=(0, 0, rep))),
                "plain",
                spec.tuning,
                alpha=0.5,
            ).statistic
            for rep in range(3)
        ]
        assert np.allclose(report.samples["size:base:n=256"], direct, rtol=0, atol=0)


class TestRejectionTable:
    def test_single_cell_layout(self):
        report = run_experiment(small_spec(reps=5, alphas=(0.05,)))
        csv_text, table_text = rejection_table(report)
        lines = csv_text.strip().split("\n")
        assert lines[0] == "scenario,n,size_0.05"
        assert len(lines) == 2
        assert "5%" in table_text

    def test_table1_grid_shape(self):
        # 5 lambda blocks x 4 n values -> 20 data rows
        reports = [
            run_experiment(small_spec(reps=1, jump_lambdas=(0.0,), n_values=(64, 128, 256, 512))),
            run_experiment(
                small_spec(
                    reps=1,
                    variant="truncated",
                    jump_lambdas=(10.0, 20.0, 50.0, 100.0),
                    n_values=(64, 128, 256, 512),
                )
            ),
        ]
        csv_text, _ = rejection_table(reports)
        assert len(csv_text.strip().split("\n")) == 1 + 20

    def test_table2_grid_shape(self):
        report = run_experiment(
            small_spec(variant="preaveraged", noise_etas=(0.001, 0.01, 0.05), n_values=(512, 1024, 2048, 4096), reps=1)
        )
        csv_text, _ = rejection_table(report)
        assert len(csv_text.strip().split("\n")) == 1 + 12

    def test_size_and_power_columns_merge(self):
        size = run_experiment(small_spec(reps=4))
        power = run_experiment(small_spec(reps=4, model=ModelSpec(Heston())))
        csv_text, table_text = rejection_table([size, power])
        header = csv_text.strip().split("\n")[0].split(",")
        assert [h for h in header if h.startswith("size_")] == ["size_0.1", "size_0.05", "size_0.01"]
        assert [h for h in header if h.startswith("power_")] == ["power_0.1", "power_0.05", "power_0.01"]
        assert "Size" in table_text and "Power" in table_text

    def test_empty_report_rejected(self):
        with pytest.raises(ParameterError):
            rejection_table([])


class TestReportExport:
    def test_rows_csv_one_line_per_cell(self):
        report = run_experiment(small_spec(reps=2, n_values=(256, 512)))
        lines = report_rows_csv([report]).strip().split("\n")
        assert len(lines) == 1 + 2 * 3  # header + n values x alphas

    def test_json_round_trip_and_no_elapsed(self):
        report = run_experiment(small_spec(reps=2))
        payload = report_to_json_dict([report])
        text = json.dumps(payload, sort_keys=True)
        assert "elapsed" not in text
        back = json.loads(text)
        assert back["experiments"][0]["spec"]["master_seed"] == 7
        assert len(back["experiments"][0]["samples"]["size:base:n=256"]) == 2


class TestExportQq:
    def test_plotting_positions_fixed_point(self):
        m = 50
        samples = [normal_quantile((i - 0.5) / m) for i in range(1, m + 1)]
        qq = export_qq(samples)
        assert np.array_equal(qq.theoretical, qq.empirical)

    def test_least_squares_slope_near_one_for_normal_draws(self):
        rng = np.random.default_rng(12)
        qq = export_qq(rng.standard_normal(2000))
        slope = np.polyfit(qq.theoretical, qq.empirical, 1)[0]
        assert slope == pytest.approx(1.0, abs=0.1)

    def test_histogram_against_density(self):
        rng = np.random.default_rng(13)
        qq = export_qq(rng.standard_normal(5000))
        assert qq.counts.sum() == 5000
        assert qq.bin_centers.shape == qq.normal_density.shape
        peak = qq.bin_centers[np.argmax(qq.counts)]
        assert abs(peak) < 0.5

    def test_constant_samples_flagged_degenerate(self):
        qq = export_qq([2.5] * 25)
        assert qq.degenerate is True
        assert qq.counts.tolist() == [25]

    def test_too_few_samples(self):
        with pytest.raises(ParameterError):
            export_qq([1.0] * 9)

    def test_nan_samples_dropped(self):
        samples = [float("nan")] * 5 + list(range(20))
        qq = export_qq(samples)
        assert qq.empirical.shape[0] == 20

    def test_csv_rendering(self):
        qq = export_qq(np.linspace(-2, 2, 40))
        pairs_text, hist_text = qq_csv(qq)
        assert pairs_text.startswith("theoretical,empirical\n")
        assert hist_text.startswith("bin_center,count,normal_density\n")
        assert len(pairs_text.strip().split("\n")) == 41
