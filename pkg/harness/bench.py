"""
Wall-clock benchmark of the engines' year steps over identical inputs.

Initialization and map writing are excluded; each repeat times all years of one
engine from the same initial state and fire maps.
"""

import logging
import time
from typing import Iterable, Optional

import pandas as pd

import config
from harness.experiment import RunConfig, build_landscape, fire_schedule, initial_states, load_params, simulate
from landscape.domain import SimulationContext
from mapio.params import ParamSet

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["engine", "m", "threads", "repeats", "median_s", "min_s", "max_s", "plants_final"]


def time_engine(engine: str, cfg: RunConfig, params: ParamSet, m: int, threads: int):
    """Seconds for cfg.years steps of one engine, and the final plant count."""
    geom, terrain = build_landscape(cfg)
    fires = fire_schedule(cfg, geom, terrain, params.fire_regime)
    ctx = SimulationContext(geom, params.table(), params.constants, cfg.seed, m)
    fine0, coarse0 = initial_states(ctx, geom, terrain, cfg.initial_plants)
    state = fine0 if engine == "fine" else coarse0

    t0 = time.perf_counter()
    for result in simulate(engine, state, ctx, fires, cfg.years, threads):
        state = result.state
    seconds = time.perf_counter() - t0
    return seconds, int(state.n_plants.sum())


def benchmark(cfg: RunConfig, repeats: int = None, thread_counts: Optional[Iterable[int]] = None,
              m_values: Optional[Iterable[int]] = None, params: Optional[ParamSet] = None) -> pd.DataFrame:
    """
    Median/min/max seconds per (engine, m, threads) over `repeats` runs.

    Returns:
        DataFrame with SUMMARY_COLUMNS, one row per combination
    """
    repeats = repeats or config.BENCH_REPEATS
    params = params or load_params(cfg)
    thread_counts = list(thread_counts or [cfg.threads])
    m_values = list(m_values or [cfg.m])

    samples = []
    for engine in cfg.engines:
        for m in m_values:
            for threads in thread_counts:
                for r in range(repeats):
                    seconds, plants = time_engine(engine, cfg, params, m, threads)
                    samples.append({"engine": engine, "m": m, "threads": threads, "repeat": r,
                                    "seconds": seconds, "plants_final": plants})
                    logger.info(f"[bench] {engine} m={m} threads={threads} repeat {r + 1}/{repeats}: {seconds:.3f} s")

    frame = pd.DataFrame(samples)
    summary = (frame.groupby(["engine", "m", "threads"], sort=False)
               .agg(repeats=("seconds", "size"), median_s=("seconds", "median"), min_s=("seconds", "min"),
                    max_s=("seconds", "max"), plants_final=("plants_final", "last"))
               .reset_index())
    return summary[SUMMARY_COLUMNS]


def median_seconds(summary: pd.DataFrame, engine: str, m: int = None, threads: int = None) -> float:
    rows = summary[summary["engine"] == engine]
    if m is not None:
        rows = rows[rows["m"] == m]
    if threads is not None:
        rows = rows[rows["threads"] == threads]
    return float(rows["median_s"].iloc[0])
