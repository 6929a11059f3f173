"""
Fire disturbance: terrain-dependent ignition sampling and fire maps on disk.

Fires are cell-local and burn for one year. A fire map is a (rows, cols) boolean
grid; null cells never burn.
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import ConfigurationError
from landscape.domain import LandscapeGeometry, TerrainType
from landscape.rng import Phase, bernoulli, keyed_uniform
from mapio.raster import AsciiRaster, read_raster, write_raster

logger = logging.getLogger(__name__)

FIRE_FILE_PATTERN = "fire_{year}.asc"
BURN_THRESHOLD = 0.5


class FireRegime(BaseModel):
    """Annual ignition probability per terrain type."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    Ridge: float = Field(0.02, ge=0, le=1)
    Slope: float = Field(0.01, ge=0, le=1)
    Valley: float = Field(0.005, ge=0, le=1)

    @classmethod
    def uniform(cls, p: float) -> "FireRegime":
        return cls(Ridge=p, Slope=p, Valley=p)

    def probabilities(self, terrain_codes) -> np.ndarray:
        """Ignition probability per cell for an array of terrain codes (0 = null cell)."""
        lookup = np.zeros(len(TerrainType) + 1)
        for t in TerrainType:
            lookup[int(t)] = getattr(self, t.name)
        return lookup[np.asarray(terrain_codes, dtype=np.int64)]


@dataclass(frozen=True)
class FireMap:
    burning: np.ndarray  # (rows, cols) bool

    @classmethod
    def none(cls, geom: LandscapeGeometry) -> "FireMap":
        return cls(np.zeros((geom.rows, geom.cols), dtype=bool))

    @property
    def n_burning(self) -> int:
        return int(self.burning.sum())


def sample_fires(regime: FireRegime, terrain_map: np.ndarray, year: int, seed: int) -> FireMap:
    """
    Each non-null cell burns independently with its terrain's probability. Draws
    are keyed by (seed, cell, year), so the map does not depend on evaluation order.

    Args:
        terrain_map: (rows, cols) terrain codes, 0 for null cells
    """
    terrain_map = np.asarray(terrain_map, dtype=np.int64)
    flat = terrain_map.ravel()
    u = keyed_uniform(seed, year, Phase.FIRE_GEN, np.arange(flat.size), np.int64(0))
    burning = (flat > 0) & bernoulli(regime.probabilities(flat), u)
    return FireMap(burning.reshape(terrain_map.shape))


def sample_fire_series(regime: FireRegime, terrain_map: np.ndarray, years: Iterable[int], seed: int) -> Dict[int, FireMap]:
    return {year: sample_fires(regime, terrain_map, year, seed) for year in years}


def load_fire_map(path, geom: LandscapeGeometry) -> FireMap:
    """
    Read a fire raster: values above 0.5 burn, null cells do not.

    Raises:
        FileNotFoundError: missing file
        RasterFormatError: non-numeric or malformed content
        ConfigurationError: raster size differs from the landscape
    """
    raster = read_raster(path)
    if raster.values.shape != (geom.rows, geom.cols):
        raise ConfigurationError(
            f"Fire map {path} is {raster.rows}x{raster.cols}, landscape is {geom.rows}x{geom.cols}")
    values = np.nan_to_num(raster.values, nan=0.0)
    return FireMap((values > BURN_THRESHOLD) & ~geom.null_mask)


def fire_map_raster(fire_map: FireMap, geom: LandscapeGeometry) -> AsciiRaster:
    values = np.where(fire_map.burning, 1.0, 0.0)
    values[geom.null_mask] = np.nan
    return AsciiRaster.like(geom, values)


def write_fire_map(fire_map: FireMap, geom: LandscapeGeometry, path) -> None:
    write_raster(fire_map_raster(fire_map, geom), path)


def load_fire_series(directory, geom: LandscapeGeometry, years: Iterable[int]) -> Dict[int, FireMap]:
    """fire_<year>.asc for each year present in `directory`; a missing year has no fire."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"Fire map directory not found: {directory}")
    series = {}
    for year in years:
        path = os.path.join(directory, FIRE_FILE_PATTERN.format(year=year))
        series[year] = load_fire_map(path, geom) if os.path.exists(path) else FireMap.none(geom)
    logger.info(f"Loaded fire maps from {directory}: "
                f"{sum(1 for f in series.values() if f.n_burning)} burning years")
    return series
