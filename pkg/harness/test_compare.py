"""
Tests for the run comparator.
"""

import json
import os

import numpy as np
import pandas as pd
import pytest

from errors import ComparisonError
from harness.compare import REPORT_CSV, REPORT_JSON, compare_runs, relative_difference, write_report
from harness.experiment import make_run_config, run_experiment
from landscape.outputs import OUTPUT_VARIABLES


@pytest.fixture(scope="module")
def both_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare") / "both"
    cfg = make_run_config(rows=2, cols=3, m=15, initial_plants=10.0, years=5, fire_mode="regime", out_dir=str(out))
    run_experiment(cfg)
    return out


def test_relative_difference_examples():
    a = np.array([[400.0, np.nan], [np.nan, np.nan]])
    b = np.array([[396.0, np.nan], [np.nan, np.nan]])
    assert relative_difference(a, b) == pytest.approx(0.01)
    assert relative_difference(a, a) == 0.0
    assert relative_difference(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_difference(np.full(2, np.nan), np.full(2, np.nan)) == 0.0


def test_run_against_itself_is_exactly_zero(both_run):
    report = compare_runs(both_run / "fine", both_run / "fine")
    for item in report.variables.values():
        assert item.mean_over_years == 0.0
        assert all(d == 0.0 for d in item.mean_rel_diff)
        assert item.max_ratio == 1.0


def test_fine_against_coarse(both_run):
    report = compare_runs(both_run / "fine", both_run / "coarse")
    assert (report.engine_a, report.engine_b) == ("fine", "coarse")
    assert set(report.variables) == set(OUTPUT_VARIABLES)
    density = report.variables["density"]
    assert len(density.mean_rel_diff) == 6
    assert density.mean_rel_diff[0] == 0.0
    assert density.max_ratio >= 1.0
    assert report.runtime_a is not None and report.runtime_a > 0
    assert report.final_totals["a"]["density"] == density.totals_a[-1]


def test_report_written_inside_run_is_reproducible(both_run):
    with open(both_run / REPORT_JSON, "r", encoding="utf-8") as f:
        saved = json.load(f)
    assert saved["runtime_a"] is None
    assert saved["run_a"] == "fine" and saved["run_b"] == "coarse"
    frame = pd.read_csv(both_run / REPORT_CSV)
    assert len(frame) == 6 * len(OUTPUT_VARIABLES)


def test_write_report_elsewhere(both_run, tmp_path):
    report = compare_runs(both_run / "fine", both_run / "coarse")
    paths = write_report(report, tmp_path / "out")
    assert all(os.path.exists(p) for p in paths)


def test_mismatched_runs_are_rejected(both_run, tmp_path):
    other = tmp_path / "other"
    run_experiment(make_run_config(rows=3, cols=3, m=15, initial_plants=10.0, years=5, engine="fine",
                                   out_dir=str(other)))
    with pytest.raises(ComparisonError, match="Geometry"):
        compare_runs(both_run / "fine", other / "fine")

    shorter = tmp_path / "shorter"
    run_experiment(make_run_config(rows=2, cols=3, m=15, initial_plants=10.0, years=2, engine="coarse",
                                   out_dir=str(shorter)))
    with pytest.raises(ComparisonError, match="Year"):
        compare_runs(both_run / "fine", shorter / "coarse")

    with pytest.raises(ComparisonError):
        compare_runs(both_run / "fine", tmp_path)


@pytest.mark.slow
def test_density_agrees_and_basal_area_diverges(tmp_path):
    density_diffs, diverged = [], 0
    for seed in range(10):
        cfg = make_run_config(rows=10, cols=20, years=200, fire_mode="regime", seed=seed,
                              out_dir=str(tmp_path / f"s{seed}"))
        report = run_experiment(cfg).comparison
        density_diffs.append(report.variables["density"].mean_over_years)
        if report.variables["basal_area"].max_ratio > 1.5:
            diverged += 1
    assert np.mean(density_diffs) < 0.05
    assert diverged >= 5
