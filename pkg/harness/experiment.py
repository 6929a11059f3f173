"""
Experiment runner: run configuration and presets, landscape and fire inputs,
the year loop, and the run directory.

    <out>/<engine>/{variable}_{species|total}_{year}.asc
    <out>/<engine>/manifest.json      deterministic record of the run
    <out>/<engine>/runtime.json       wall-clock timings and worker count
    <out>/<engine>/trajectory.csv     per-year landscape totals
    <out>/<engine>/bookkeeping.csv    per-year births and deaths
    <out>/comparison.json|csv         engine=both only
"""

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

import config
from errors import ConfigurationError
from harness.consistency import abstraction_map
from landscape import coarse_engine, fine_engine
from landscape.disturbance import FireMap, FireRegime, load_fire_series, sample_fire_series
from landscape.domain import LandscapeGeometry, SimulationContext, TerrainType
from landscape.outputs import stand_totals
from mapio.manifest import RUNTIME_FILE, GeometryEcho, RunManifest, RunTimings, write_manifest, write_timings
from mapio.outputs import write_outputs
from mapio.params import ParamSet, params_echo, read_params
from mapio.raster import read_raster

logger = logging.getLogger(__name__)

ENGINES = ("fine", "coarse")
TRAJECTORY_FILE = "trajectory.csv"
BOOKKEEPING_FILE = "bookkeeping.csv"

# Experiment configurations: one active cell of four, a 5,000-cell map and a 20,000-cell map
PRESETS = {
    "single-cell": dict(rows=2, cols=2, cell_area=100.0, null_cells=[1, 2, 3], m=100,
                        initial_plants=20.0, years=200, fire_mode="none"),
    "5k": dict(rows=50, cols=100, cell_area=100.0, null_cells=[], m=100,
               initial_plants=20.0, years=200, fire_mode="regime"),
    "20k": dict(rows=100, cols=200, cell_area=25.0, null_cells=[], m=100,
                initial_plants=20.0, years=200, fire_mode="regime"),
}

# Fields that describe how a run was executed rather than what it computed
RUNTIME_ONLY_FIELDS = {"threads", "out_dir"}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: Optional[str] = None
    rows: int = Field(2, gt=0)
    cols: int = Field(2, gt=0)
    cell_area: float = Field(100.0, gt=0)
    null_cells: List[int] = Field(default_factory=list, description="Flat row-major indices of null cells")
    m: int = Field(100, gt=0, description="Max plants per species per cell")
    initial_plants: float = Field(20.0, ge=0, description="Average initial plants per cell (all species)")
    years: int = Field(200, ge=0)
    seed: int = config.DEFAULT_SEED
    engine: Literal["fine", "coarse", "both"] = "both"
    threads: int = Field(config.DEFAULT_THREADS, gt=0)
    out_dir: str = config.OUTPUT_DIR
    params_path: Optional[str] = None
    terrain_path: Optional[str] = None
    terrain_kind: Optional[str] = None
    fire_mode: Literal["none", "regime", "map"] = "none"
    fire_dir: Optional[str] = None
    prefer_fire_maps: bool = False
    write_maps: bool = True

    @model_validator(mode="before")
    @classmethod
    def _resolve_fire_mode(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        mode, fire_dir = data.get("fire_mode"), data.get("fire_dir")
        if fire_dir:
            if mode == "regime" and not data.get("prefer_fire_maps"):
                raise ValueError("both fire maps and a fire regime were supplied; "
                                 "set prefer_fire_maps to let the maps take precedence")
            data["fire_mode"] = "map"
        elif mode == "map":
            raise ValueError("fire_mode 'map' needs fire_dir")
        return data

    @model_validator(mode="after")
    def _check_cells(self):
        n_cells = self.rows * self.cols
        bad = [i for i in self.null_cells if not 0 <= i < n_cells]
        if bad:
            raise ValueError(f"null_cells outside the {self.rows}x{self.cols} grid: {bad}")
        if self.terrain_kind is not None:
            TerrainType.from_name(self.terrain_kind)
        return self

    @property
    def engines(self) -> Tuple[str, ...]:
        return ENGINES if self.engine == "both" else (self.engine,)

    def echo(self) -> dict:
        """Config as recorded in the manifest: everything that affects the numbers."""
        return self.model_dump(mode="json", exclude=RUNTIME_ONLY_FIELDS)


def _apply_layer(values: dict, layer: dict) -> None:
    """Overlay one config layer. Fire maps given without a fire mode replace an inherited mode."""
    if "fire_dir" in layer and "fire_mode" not in layer:
        values["fire_mode"] = "map"
    elif layer.get("fire_mode") == "none":
        values.pop("fire_dir", None)
    values.update(layer)


def make_run_config(preset: Optional[str] = None, config_path: Optional[str] = None, **overrides) -> RunConfig:
    """
    Merge preset values, a JSON config file and explicit overrides (in that order).
    Overrides equal to None are ignored. Fire maps supplied by a later layer take the
    place of the fire mode of an earlier one; maps and a regime in the same layer are
    a conflict unless prefer_fire_maps is set.

    Raises:
        ConfigurationError: unknown preset, unreadable config file or invalid values
    """
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"Unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        values.update(PRESETS[preset], preset=preset)
    if config_path is not None:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                layer = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Run config {config_path} is not valid JSON: {e}")
        if not isinstance(layer, dict):
            raise ConfigurationError(f"Run config {config_path} must hold a JSON object")
        _apply_layer(values, layer)
    _apply_layer(values, {k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigurationError(f"Invalid run configuration ({where}): {first['msg']}")


def load_params(cfg: RunConfig) -> ParamSet:
    return read_params(cfg.params_path or config.PARAMS_FILE)


def synthesize_terrain(geom: LandscapeGeometry, terrain_kind: Optional[str] = None) -> np.ndarray:
    """
    Terrain codes (0 for null cells). Without `terrain_kind`, vertical bands run
    Ridge, Slope, Valley from west to east.
    """
    if terrain_kind is not None:
        codes = np.full((geom.rows, geom.cols), int(TerrainType.from_name(terrain_kind)), dtype=np.int64)
    else:
        band = (np.arange(geom.cols) * len(TerrainType)) // geom.cols + 1
        codes = np.broadcast_to(band, (geom.rows, geom.cols)).astype(np.int64)
    codes[geom.null_mask] = 0
    return codes


def load_terrain(path) -> Tuple[LandscapeGeometry, np.ndarray]:
    """Geometry and terrain codes from a terrain raster (1 Ridge, 2 Slope, 3 Valley, * null)."""
    raster = read_raster(path)
    null_mask = raster.null_mask
    values = np.nan_to_num(raster.values, nan=0.0)
    valid = np.isin(values[~null_mask], [int(t) for t in TerrainType])
    if not valid.all():
        raise ConfigurationError(f"Terrain map {path} holds codes other than 1, 2, 3 or *")
    geom = LandscapeGeometry(raster.rows, raster.cols, raster.cell_area, null_mask)
    return geom, values.astype(np.int64)


def build_landscape(cfg: RunConfig) -> Tuple[LandscapeGeometry, np.ndarray]:
    if cfg.terrain_path:
        geom, terrain = load_terrain(cfg.terrain_path)
        if (geom.rows, geom.cols) != (cfg.rows, cfg.cols) and cfg.preset:
            logger.info(f"Terrain map {cfg.terrain_path} sets the grid to {geom.rows}x{geom.cols}")
        if cfg.terrain_kind is not None:
            terrain = synthesize_terrain(geom, cfg.terrain_kind)
        return geom, terrain
    null_mask = np.zeros(cfg.rows * cfg.cols, dtype=bool)
    null_mask[cfg.null_cells] = True
    geom = LandscapeGeometry(cfg.rows, cfg.cols, cfg.cell_area, null_mask.reshape(cfg.rows, cfg.cols))
    return geom, synthesize_terrain(geom, cfg.terrain_kind)


def fire_schedule(cfg: RunConfig, geom: LandscapeGeometry, terrain: np.ndarray,
                  regime: FireRegime) -> Dict[int, FireMap]:
    """Fire map for every simulated year 1..years, sampled or loaded once for all engines."""
    years = range(1, cfg.years + 1)
    if cfg.fire_mode == "map":
        return load_fire_series(cfg.fire_dir, geom, years)
    if cfg.fire_mode == "regime":
        return sample_fire_series(regime, terrain, years, cfg.seed)
    return {}


@dataclass
class YearResult:
    year: int
    state: object
    tally: object
    layers: Dict[str, np.ndarray]
    seconds: float


def initial_states(ctx: SimulationContext, geom: LandscapeGeometry, terrain: np.ndarray, initial_plants: float):
    """(fine state, coarse state); the coarse one is the abstraction of the fine one."""
    cells = geom.active_indices()
    fine = fine_engine.initialize_fine(ctx, cells, terrain.ravel()[cells], initial_plants)
    return fine, abstraction_map(fine)


ENGINE_STEPS = {
    "fine": (fine_engine.step_fine, fine_engine.output_layers),
    "coarse": (coarse_engine.step_coarse, coarse_engine.output_layers),
}


def simulate(engine: str, state, ctx: SimulationContext, fires: Dict[int, FireMap], years: int,
             threads: int = 1) -> Iterator[YearResult]:
    """Step one engine through years 1..years, yielding after each year's barrier."""
    step, _ = ENGINE_STEPS[engine]
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for year in range(1, years + 1):
            t0 = time.perf_counter()
            state, tally, layers = step(state, year, fires.get(year), ctx, executor=executor, workers=threads)
            yield YearResult(year, state, tally, layers, time.perf_counter() - t0)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)


def conservation_violations(tally) -> int:
    """Number of (cell, species) entries breaking n_end = n_start - deaths + germinated."""
    expected = tally.n_start - tally.fire_dead - tally.natural_dead + tally.germinated
    return int(np.count_nonzero(expected != tally.n_end))


def _bookkeeping_rows(year: int, tally, labels) -> List[dict]:
    rows = []
    for s, label in enumerate(labels):
        rows.append({
            "year": year,
            "species": label,
            "n_start": int(tally.n_start[:, s].sum()),
            "fire_dead": int(tally.fire_dead[:, s].sum()),
            "natural_dead": int(tally.natural_dead[:, s].sum()),
            "germinated": int(tally.germinated[:, s].sum()),
            "n_end": int(tally.n_end[:, s].sum()),
        })
    return rows


@dataclass
class EngineRun:
    engine: str
    directory: str
    final_totals: Dict[str, float]
    seconds: float
    violations: int = 0


@dataclass
class RunResult:
    root: str
    engines: Dict[str, EngineRun] = field(default_factory=dict)
    comparison: Optional[object] = None


def run_engine(engine: str, cfg: RunConfig, params: ParamSet, geom: LandscapeGeometry, terrain: np.ndarray,
               fires: Dict[int, FireMap], directory: str) -> EngineRun:
    table = params.table()
    ctx = SimulationContext(geom, table, params.constants, cfg.seed, cfg.m)
    labels = list(table.labels)
    cells = geom.active_indices()
    _, layers_of = ENGINE_STEPS[engine]

    t_start = time.perf_counter()
    fine0, coarse0 = initial_states(ctx, geom, terrain, cfg.initial_plants)
    state = fine0 if engine == "fine" else coarse0
    layers = layers_of(state, ctx)
    init_seconds = time.perf_counter() - t_start

    files = []
    if cfg.write_maps:
        files += write_outputs(directory, 0, layers, cells, geom, labels)
    else:
        os.makedirs(directory, exist_ok=True)
    trajectory = [dict(year=0, **stand_totals(layers, labels))]
    bookkeeping, year_seconds, violations = [], [], 0

    for result in simulate(engine, state, ctx, fires, cfg.years, cfg.threads):
        year_seconds.append(result.seconds)
        layers = result.layers
        if cfg.write_maps:
            files += write_outputs(directory, result.year, layers, cells, geom, labels)
        trajectory.append(dict(year=result.year, **stand_totals(layers, labels)))
        bookkeeping += _bookkeeping_rows(result.year, result.tally, labels)
        broken = conservation_violations(result.tally)
        if broken:
            logger.warning(f"[{engine}] year {result.year}: {broken} cell/species entries break conservation")
        violations += broken
        if result.year % config.PROGRESS_EVERY == 0 or result.year == cfg.years:
            logger.info(f"[{engine}] year {result.year}/{cfg.years}: "
                        f"density {trajectory[-1]['density_total']:.0f}, "
                        f"basal area {trajectory[-1]['basal_area_total']:.4g} m2")

    pd.DataFrame(trajectory).to_csv(os.path.join(directory, TRAJECTORY_FILE), index=False)
    pd.DataFrame(bookkeeping, columns=["year", "species", "n_start", "fire_dead", "natural_dead",
                                       "germinated", "n_end"]).to_csv(
        os.path.join(directory, BOOKKEEPING_FILE), index=False)
    files += [TRAJECTORY_FILE, BOOKKEEPING_FILE]

    manifest = RunManifest(
        version=config.VERSION,
        engine=engine,
        seed=cfg.seed,
        years=cfg.years,
        m=cfg.m,
        species=labels,
        geometry=GeometryEcho(rows=geom.rows, cols=geom.cols, cell_area=geom.cell_area, n_active=geom.n_active),
        config=cfg.echo(),
        params=params_echo(params),
        fire_years=sorted(y for y, f in fires.items() if f.n_burning),
        files=sorted(files),
    )
    write_manifest(directory, manifest)
    total = time.perf_counter() - t_start
    write_timings(directory, RunTimings(engine=engine, threads=cfg.threads, init_seconds=init_seconds,
                                        year_seconds=year_seconds, total_seconds=total))
    return EngineRun(engine, directory, trajectory[-1], total, violations)


def run_experiment(cfg: RunConfig, params: Optional[ParamSet] = None) -> RunResult:
    """
    Run the configured engine(s). With engine=both, the two engines read the same
    terrain and the same pre-sampled fire maps, and the root gets a comparison report.
    """
    from harness.compare import compare_runs, write_report

    params = params or load_params(cfg)
    geom, terrain = build_landscape(cfg)
    fires = fire_schedule(cfg, geom, terrain, params.fire_regime)
    os.makedirs(cfg.out_dir, exist_ok=True)
    logger.info(f"Run {cfg.preset or 'custom'}: {geom.rows}x{geom.cols} cells ({geom.n_active} active), "
                f"{cfg.years} years, seed {cfg.seed}, engine {cfg.engine}, {cfg.threads} thread(s)")

    result = RunResult(root=cfg.out_dir)
    for engine in cfg.engines:
        directory = os.path.join(cfg.out_dir, engine)
        result.engines[engine] = run_engine(engine, cfg, params, geom, terrain, fires, directory)
        logger.info(f"[{engine}] finished in {result.engines[engine].seconds:.2f} s -> {directory}")

    if cfg.engine == "both" and cfg.write_maps:
        report = compare_runs(result.engines["fine"].directory, result.engines["coarse"].directory,
                              include_runtimes=False)
        write_report(report, cfg.out_dir)
        result.comparison = report
    return result


def directory_digest(path, exclude=(RUNTIME_FILE,)) -> Dict[str, str]:
    """sha256 of every file under `path` by relative name, skipping the names in `exclude`."""
    digests = {}
    for root, _, files in os.walk(path):
        for name in files:
            if name in exclude:
                continue
            full = os.path.join(root, name)
            with open(full, "rb") as f:
                digests[os.path.relpath(full, path)] = hashlib.sha256(f.read()).hexdigest()
    return dict(sorted(digests.items()))
