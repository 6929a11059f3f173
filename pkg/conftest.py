# Shared pytest fixtures

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import config
from landscape.domain import LandscapeGeometry, SimulationContext
from mapio.params import read_params


@pytest.fixture(scope="session")
def params():
    return read_params(config.PARAMS_FILE)


@pytest.fixture(scope="session")
def table(params):
    return params.table()


@pytest.fixture
def geom():
    return LandscapeGeometry(1, 1, 100.0)


@pytest.fixture
def ctx(params, geom):
    return SimulationContext(geom, params.table(), params.constants, seed=7, m=100)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


SPECIES_DEFAULTS = dict(
    functional_type={"lifeform": "Tree", "resprouter": True, "fire_tolerant": False, "label": "Test"},
    h_max=20.0, hd_a=0.05, g_max=0.5, d_max=100.0, age_max=200, age_adult=5,
    c_seeds=50.0, c_leaf=0.16, p_b=0.01, p_max=0.3, g_rate=0.2, fire_kill_frac=0.5,
)


@pytest.fixture
def make_species():
    """Factory for SpeciesParams with overridable traits."""
    from landscape.domain import SpeciesParams

    def _make(**overrides):
        return SpeciesParams(**{**SPECIES_DEFAULTS, **overrides})
    return _make


@pytest.fixture
def make_table(make_species):
    """Factory for a SpeciesTable from one or more trait dicts."""
    from landscape.domain import SpeciesTable

    def _make(*species):
        species = species or ({},)
        return SpeciesTable.from_params({f"sp{i}": make_species(**traits) for i, traits in enumerate(species)})
    return _make


@pytest.fixture
def make_ctx(params):
    """Factory for a SimulationContext on a 1-cell (or given) geometry."""
    def _make(table=None, m=100, seed=7, geom=None, constants=None):
        return SimulationContext(geom or LandscapeGeometry(1, 1, 100.0), table or params.table(),
                                 constants or params.constants, seed, m)
    return _make
