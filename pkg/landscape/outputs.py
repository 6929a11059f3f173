# Output variables shared by both engines and their map / stand-total forms

from typing import Dict, Sequence

import numpy as np

from landscape.blocks import species_total

OUTPUT_VARIABLES = ("basal_area", "density", "biomass", "lai", "seed_bank", "dead_biomass")
TOTAL = "total"


def layer_grids(layers: Dict[str, np.ndarray], cells, geom, labels: Sequence[str]) -> Dict[str, Dict[str, np.ndarray]]:
    """
    Scatter per-(cell, species) layers onto full (rows, cols) grids.

    Returns:
        {variable: {species label or "total": grid}}, null cells NaN
    """
    cells = np.asarray(cells, dtype=np.int64)
    grids = {}
    for var in OUTPUT_VARIABLES:
        values = layers[var]
        per_name = {label: values[:, s] for s, label in enumerate(labels)}
        per_name[TOTAL] = species_total(values)
        grids[var] = {}
        for name, column in per_name.items():
            grid = np.full(geom.rows * geom.cols, np.nan)
            grid[cells] = column
            grids[var][name] = grid.reshape(geom.rows, geom.cols)
    return grids


def stand_totals(layers: Dict[str, np.ndarray], labels: Sequence[str]) -> Dict[str, float]:
    """Landscape sums per variable and species, keyed "<variable>_<species|total>"."""
    row = {}
    for var in OUTPUT_VARIABLES:
        values = layers[var]
        for s, label in enumerate(labels):
            row[f"{var}_{label}"] = float(np.sum(values[:, s]))
        row[f"{var}_{TOTAL}"] = float(np.sum(species_total(values)))
    return row
