# Persisted-scalar counts of the two state representations

import logging
import os
from typing import NamedTuple, Optional

import numpy as np

from errors import ComparisonError
from harness.experiment import ENGINES
from landscape import coarse_engine, fine_engine
from landscape.fine_engine import FineState
from mapio.manifest import MANIFEST_FILE, read_manifest
from mapio.outputs import read_output_map

logger = logging.getLogger(__name__)

FINE_SCALARS_PER_PLANT = 3    # diameter, age, seed output
COARSE_SCALARS_PER_COHORT = 4  # count, mean diameter, mean age, seed bank


class Cardinality(NamedTuple):
    fine: int
    coarse: int


def state_cardinality(fine_state: Optional[FineState] = None, coarse_state=None) -> Cardinality:
    """Counts for live states; a missing coarse state is taken as the abstraction of the fine one."""
    fine = fine_engine.persisted_scalars(fine_state) if fine_state is not None else 0
    if coarse_state is not None:
        coarse = coarse_engine.persisted_scalars(coarse_state)
    elif fine_state is not None:
        coarse = COARSE_SCALARS_PER_COHORT * fine_state.n_cells * fine_state.n_species
    else:
        coarse = 0
    return Cardinality(fine, coarse)


def _engine_dirs(run_dir):
    if os.path.exists(os.path.join(run_dir, MANIFEST_FILE)):
        return [run_dir]
    dirs = [os.path.join(run_dir, e) for e in ENGINES if os.path.exists(os.path.join(run_dir, e, MANIFEST_FILE))]
    if not dirs:
        raise ComparisonError(f"{run_dir} holds no finished run")
    return dirs


def run_cardinality(run_dir) -> Cardinality:
    """
    Counts from the final-year density maps of a run directory (run root or engine
    directory). The fine count uses the fine run's plants when present, otherwise
    the plants of whichever engine ran.
    """
    dirs = _engine_dirs(run_dir)
    source = next((d for d in dirs if read_manifest(d).engine == "fine"), dirs[0])
    manifest = read_manifest(source)
    plants = 0
    for label in manifest.species:
        density = read_output_map(source, "density", label, manifest.years).values
        plants += int(np.rint(np.nansum(density)))
    coarse = COARSE_SCALARS_PER_COHORT * manifest.geometry.n_active * len(manifest.species)
    result = Cardinality(FINE_SCALARS_PER_PLANT * plants, coarse)
    logger.info(f"Cardinality of {run_dir}: fine {result.fine}, coarse {result.coarse}")
    return result
