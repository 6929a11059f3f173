"""
Per-plant allometry shared by both engines.

Units: diameter in cm, height in m, areas in m2. Every function accepts a
scalar `SpeciesParams` or a broadcastable `SpeciesTable`, so the same formula
serves a single plant, a cohort mean or a (cells, species, m) block of plants.
Pass `validate=False` from hot loops that already guarantee non-negative
diameters.
"""

import numpy as np

from errors import DomainError
from landscape.domain import DEFAULT_CONSTANTS, EngineConstants

CM2_PER_M2 = 1.0e4


def _check_non_negative(name, value):
    if np.any(np.asarray(value) < 0):
        raise DomainError(f"{name} must be non-negative")


def height(d, p, validate: bool = True):
    """Height (m) from diameter (cm): h_max * (1 - exp(-hd_a * d))."""
    if validate:
        _check_non_negative("diameter", d)
    return p.h_max * (1.0 - np.exp(-p.hd_a * d))


def basal_area_single(d, validate: bool = True):
    """Stem cross-section (m2) of a plant of diameter d (cm)."""
    if validate:
        _check_non_negative("diameter", d)
    return (np.pi / 4.0) * np.square(d) / CM2_PER_M2


def leaf_area_single(d, p, validate: bool = True):
    """Leaf area (m2) of a plant of diameter d (cm): c_leaf * d^2."""
    if validate:
        _check_non_negative("diameter", d)
    return p.c_leaf * np.square(d)


def biomass_single(d, constants: EngineConstants = DEFAULT_CONSTANTS):
    """Above-ground biomass (kg): biomass_coef * d^biomass_exp."""
    return constants.biomass_coef * np.power(d, constants.biomass_exp)


def growth_factors(ba_cell, la_above, d, p, geom, constants: EngineConstants = DEFAULT_CONSTANTS,
                   validate: bool = True):
    """
    Crowding, shading and size limits on growth, each clipped to [0, 1].

    Args:
        ba_cell: Basal area of the whole cell (m2)
        la_above: Leaf area above the plant's height (m2)
        d: Diameter of the plant, or cohort mean diameter (cm)
        p: SpeciesParams or SpeciesTable (uses d_max)
        geom: Anything with a `cell_area` attribute (m2)
        constants: Provides ba_max_frac and k_shade

    Returns:
        (space_factor, light_factor, resp_factor)
    """
    if validate:
        for name, value in (("ba_cell", ba_cell), ("la_above", la_above), ("diameter", d)):
            _check_non_negative(name, value)
    cell_area = geom.cell_area
    space = np.clip(1.0 - ba_cell / (constants.ba_max_frac * cell_area), 0.0, 1.0)
    light = np.clip(np.exp(-constants.k_shade * la_above / cell_area), 0.0, 1.0)
    resp = np.clip(1.0 - d / p.d_max, 0.0, 1.0)
    return space, light, resp


def increment_from(g_max, factors, terrain_multiplier):
    space, light, resp = factors
    return g_max * space * light * resp * terrain_multiplier


def growth_increment(factors, p, terrain):
    """Annual diameter increment (cm/yr) for a terrain type (or array of terrain codes)."""
    return increment_from(p.g_max, factors, p.terrain_multiplier(terrain))


def mortality_probability(age, p):
    """Annual death probability rising linearly with age from p_b to p_max."""
    raw = p.p_b + (p.p_max - p.p_b) * (np.asarray(age, dtype=float) / p.age_max)
    return np.clip(raw, p.p_b, p.p_max)
