"""
Comparison of two finished engine runs over the same landscape and years.
"""

import json
import logging
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

import config
from errors import ComparisonError
from landscape.outputs import OUTPUT_VARIABLES, TOTAL
from mapio.manifest import MANIFEST_FILE, RunManifest, read_manifest, read_timings
from mapio.outputs import read_output_map

logger = logging.getLogger(__name__)

REPORT_JSON = "comparison.json"
REPORT_CSV = "comparison.csv"


class VariableComparison(BaseModel):
    variable: str
    mean_rel_diff: List[float]
    mean_over_years: float
    totals_a: List[float]
    totals_b: List[float]
    max_ratio: float
    max_ratio_year: Optional[int] = None
    max_ratio_b_over_a: float


class ComparisonReport(BaseModel):
    run_a: str
    run_b: str
    engine_a: str
    engine_b: str
    years: int
    variables: Dict[str, VariableComparison]
    final_totals: Dict[str, Dict[str, float]]
    runtime_a: Optional[float] = None
    runtime_b: Optional[float] = None
    runtime_ratio: Optional[float] = None


def relative_difference(a: np.ndarray, b: np.ndarray, eps: float = config.REL_EPSILON) -> float:
    """Mean over non-null cells of |a - b| / max(|a|, |b|, eps); 0 when there are none."""
    valid = ~np.isnan(a)
    if not valid.any():
        return 0.0
    a, b = a[valid], b[valid]
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), eps)
    return float(np.mean(np.abs(a - b) / scale))


def _ratios(totals_a, totals_b):
    """(symmetric max ratio, year of it, max b/a) over years where both totals are positive."""
    best, best_year, b_over_a = 1.0, None, None
    for year, (ta, tb) in enumerate(zip(totals_a, totals_b)):
        if ta <= 0 or tb <= 0:
            continue
        ratio = max(ta / tb, tb / ta)
        if best_year is None or ratio > best:
            best, best_year = ratio, year
        b_over_a = tb / ta if b_over_a is None else max(b_over_a, tb / ta)
    return best, best_year, 1.0 if b_over_a is None else b_over_a


def _load_manifest(directory) -> RunManifest:
    if not os.path.exists(os.path.join(directory, MANIFEST_FILE)):
        raise ComparisonError(f"{directory} is not a finished run (no {MANIFEST_FILE})")
    return read_manifest(directory)


def _check_comparable(a: RunManifest, b: RunManifest):
    ga, gb = a.geometry, b.geometry
    if (ga.rows, ga.cols, ga.n_active) != (gb.rows, gb.cols, gb.n_active) or not np.isclose(ga.cell_area, gb.cell_area):
        raise ComparisonError(f"Geometry mismatch: {ga.rows}x{ga.cols} ({ga.n_active} active, {ga.cell_area} m2) "
                              f"vs {gb.rows}x{gb.cols} ({gb.n_active} active, {gb.cell_area} m2)")
    if a.years != b.years:
        raise ComparisonError(f"Year mismatch: {a.years} vs {b.years}")
    if a.species != b.species:
        raise ComparisonError(f"Species mismatch: {a.species} vs {b.species}")


def compare_runs(dir_a, dir_b, include_runtimes: bool = True) -> ComparisonReport:
    """
    Per-variable divergence between two engine run directories, from the stand-total maps.

    Raises:
        ComparisonError: missing manifest, or geometry / years / species differ
    """
    ma, mb = _load_manifest(dir_a), _load_manifest(dir_b)
    _check_comparable(ma, mb)

    variables = {}
    for var in OUTPUT_VARIABLES:
        diffs, totals_a, totals_b = [], [], []
        for year in range(ma.years + 1):
            a = read_output_map(dir_a, var, TOTAL, year).values
            b = read_output_map(dir_b, var, TOTAL, year).values
            if not np.array_equal(np.isnan(a), np.isnan(b)):
                raise ComparisonError(f"Null cells differ in {var} year {year}")
            diffs.append(relative_difference(a, b))
            totals_a.append(float(np.nansum(a)))
            totals_b.append(float(np.nansum(b)))
        max_ratio, max_year, b_over_a = _ratios(totals_a, totals_b)
        variables[var] = VariableComparison(
            variable=var,
            mean_rel_diff=diffs,
            mean_over_years=float(np.mean(diffs)),
            totals_a=totals_a,
            totals_b=totals_b,
            max_ratio=max_ratio,
            max_ratio_year=max_year,
            max_ratio_b_over_a=b_over_a,
        )

    final = {
        "a": {var: variables[var].totals_a[-1] for var in ("density", "basal_area")},
        "b": {var: variables[var].totals_b[-1] for var in ("density", "basal_area")},
    }
    report = ComparisonReport(
        run_a=os.path.basename(os.path.normpath(dir_a)),
        run_b=os.path.basename(os.path.normpath(dir_b)),
        engine_a=ma.engine,
        engine_b=mb.engine,
        years=ma.years,
        variables=variables,
        final_totals=final,
    )
    if include_runtimes:
        ta, tb = read_timings(dir_a).total_seconds, read_timings(dir_b).total_seconds
        report.runtime_a, report.runtime_b = ta, tb
        report.runtime_ratio = tb / ta if ta > 0 else None

    logger.info(f"Compared {report.run_a} and {report.run_b}: density diff "
                f"{variables['density'].mean_over_years:.4f}, basal-area max ratio "
                f"{variables['basal_area'].max_ratio:.3f}")
    return report


def report_frame(report: ComparisonReport) -> pd.DataFrame:
    rows = []
    for var, item in report.variables.items():
        for year, (d, ta, tb) in enumerate(zip(item.mean_rel_diff, item.totals_a, item.totals_b)):
            rows.append({"year": year, "variable": var, "mean_rel_diff": d, "total_a": ta, "total_b": tb})
    return pd.DataFrame(rows, columns=["year", "variable", "mean_rel_diff", "total_a", "total_b"])


def write_report(report: ComparisonReport, directory) -> List[str]:
    os.makedirs(directory, exist_ok=True)
    json_path = os.path.join(directory, REPORT_JSON)
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report.model_dump(mode="json"), f, indent=2, sort_keys=True)
        f.write("\n")
    csv_path = os.path.join(directory, REPORT_CSV)
    report_frame(report).to_csv(csv_path, index=False)
    return [json_path, csv_path]
