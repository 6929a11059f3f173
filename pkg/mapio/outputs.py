"""
Per-year output map series: <variable>_<species|total>_<year>.asc in the engine's
run directory.
"""

import logging
import os
from typing import Dict, List, Sequence

import numpy as np

from landscape.outputs import OUTPUT_VARIABLES, TOTAL, layer_grids
from mapio.raster import AsciiRaster, read_raster, write_raster

logger = logging.getLogger(__name__)

MAP_FILE_PATTERN = "{variable}_{name}_{year}.asc"


def map_file_name(variable: str, name: str, year: int) -> str:
    return MAP_FILE_PATTERN.format(variable=variable, name=name, year=year)


def write_outputs(directory, year: int, layers: Dict[str, np.ndarray], cells, geom,
                  labels: Sequence[str]) -> List[str]:
    """
    Write all variables for one year, per species and stand total.

    Returns:
        The file names written, relative to `directory`.

    Raises:
        OSError: directory cannot be created or written
    """
    os.makedirs(directory, exist_ok=True)
    written = []
    for variable, per_name in layer_grids(layers, cells, geom, labels).items():
        for name, grid in per_name.items():
            file_name = map_file_name(variable, name, year)
            write_raster(AsciiRaster.like(geom, grid), os.path.join(directory, file_name))
            written.append(file_name)
    return written


def expected_files(labels: Sequence[str], years: int) -> List[str]:
    names = list(labels) + [TOTAL]
    return [map_file_name(v, n, y) for y in range(years + 1) for v in OUTPUT_VARIABLES for n in names]


def read_output_map(directory, variable: str, name: str, year: int) -> AsciiRaster:
    return read_raster(os.path.join(directory, map_file_name(variable, name, year)))
