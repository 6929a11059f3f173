"""
Individual-based engine.

Every plant of every species in every active cell is stored. Per-plant arrays have
shape (cells, species, m); a slot is either a live plant or empty (alive=False,
diameter=0, age=0). Only diameter, age and seed output persist between years;
height, basal area and leaf area are derived when needed.

Yearly phase order: fire, growth-rate calculation, natural death, attribute
update, germination, seed bank.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from errors import ConfigurationError, DomainError
from landscape import allometry
from landscape.blocks import CellBlock, cell_total, sweep
from landscape.domain import (DEFAULT_CONSTANTS, EngineConstants, SimulationContext,
                              SpeciesTable, TerrainType)
from landscape.rng import KeyedStream, Phase, bernoulli, binomial, keyed_uniform, poisson, uniform_int

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlantRecord:
    diameter: float
    age: int
    seeds: float = 0.0


@dataclass(frozen=True)
class FineState(CellBlock):
    cells: np.ndarray
    terrain: np.ndarray
    alive: np.ndarray
    diameter: np.ndarray
    age: np.ndarray
    seeds: np.ndarray
    seed_bank: np.ndarray
    dead_biomass: np.ndarray

    @property
    def m(self) -> int:
        return self.alive.shape[2]

    @property
    def n_species(self) -> int:
        return self.alive.shape[1]

    @property
    def n_plants(self) -> np.ndarray:
        """Plant count per (cell, species)."""
        return self.alive.sum(axis=2)

    def plants(self, c: int, s: int) -> List[PlantRecord]:
        slots = np.flatnonzero(self.alive[c, s])
        return [PlantRecord(float(self.diameter[c, s, k]), int(self.age[c, s, k]), float(self.seeds[c, s, k]))
                for k in slots]

    @classmethod
    def empty(cls, cells, terrain, n_species: int, m: int) -> "FineState":
        cells = np.asarray(cells, dtype=np.int64)
        n = cells.shape[0]
        return cls(
            cells=cells,
            terrain=np.asarray(terrain, dtype=np.int64).reshape(n),
            alive=np.zeros((n, n_species, m), dtype=bool),
            diameter=np.zeros((n, n_species, m)),
            age=np.zeros((n, n_species, m), dtype=np.int64),
            seeds=np.zeros((n, n_species, m)),
            seed_bank=np.zeros((n, n_species), dtype=np.int64),
            dead_biomass=np.zeros((n, n_species)),
        )

    @classmethod
    def from_plants(cls, plants: Sequence[Sequence[Tuple[float, int]]], m: int,
                    terrain=TerrainType.Slope, seed_bank=None, cell_index: int = 0) -> "FineState":
        """One-cell state from a list (per species) of (diameter, age) pairs."""
        state = cls.empty([cell_index], [int(terrain)], len(plants), m)
        for s, group in enumerate(plants):
            if len(group) > m:
                raise ConfigurationError(f"{len(group)} plants exceed m={m} for species {s}")
            for k, (d, a) in enumerate(group):
                state.alive[0, s, k] = True
                state.diameter[0, s, k] = d
                state.age[0, s, k] = a
        if seed_bank is not None:
            state.seed_bank[0] = np.asarray(seed_bank, dtype=np.int64)
        return state


@dataclass(frozen=True)
class FineTally(CellBlock):
    """Per (cell, species) population bookkeeping for one year."""
    cells: np.ndarray
    n_start: np.ndarray
    fire_dead: np.ndarray
    natural_dead: np.ndarray
    germinated: np.ndarray
    n_end: np.ndarray


def _slot_total(values: np.ndarray) -> np.ndarray:
    """(C, S, m) -> (C, S), slots added in order."""
    return np.cumsum(values, axis=2)[..., -1]


def _plant_lanes(n_species: int, m: int) -> np.ndarray:
    return np.arange(n_species * m).reshape(n_species, m)


def _remove_plants(state: FineState, kill: np.ndarray, constants: EngineConstants):
    killed_biomass = _slot_total(np.where(kill, allometry.biomass_single(state.diameter, constants), 0.0))
    state = replace(
        state,
        alive=state.alive & ~kill,
        diameter=np.where(kill, 0.0, state.diameter),
        age=np.where(kill, 0, state.age),
        seeds=np.where(kill, 0.0, state.seeds),
        dead_biomass=state.dead_biomass + killed_biomass,
    )
    return state, kill.sum(axis=2), killed_biomass


def apply_fire_fine(state: FineState, burning, stream: KeyedStream, table: SpeciesTable,
                    constants: EngineConstants = DEFAULT_CONSTANTS):
    """
    Kill each plant of a burning cell with its species' fire_kill_frac.

    Returns:
        (state, killed count per (cell, species), killed biomass per (cell, species))
    """
    burning = np.broadcast_to(np.asarray(burning, dtype=bool), (state.n_cells,))
    if not burning.any():
        zeros = np.zeros(state.seed_bank.shape, dtype=np.int64)
        return state, zeros, np.zeros(state.seed_bank.shape)

    idx = np.flatnonzero(burning)
    col = table.column()
    u = stream.uniform(Phase.FIRE, state.cells[idx], _plant_lanes(state.n_species, state.m))
    kill = np.zeros_like(state.alive)
    kill[idx] = state.alive[idx] & bernoulli(col.fire_kill_frac, u)
    return _remove_plants(state, kill, constants)


def death_probability(age, p):
    """Age-dependent mortality; plants at age_max die for certain. `p` must broadcast against `age`."""
    return np.where(age >= p.age_max, 1.0, allometry.mortality_probability(age, p))


def natural_death_fine(state: FineState, stream: KeyedStream, table: SpeciesTable,
                       constants: EngineConstants = DEFAULT_CONSTANTS):
    """Each plant dies independently with p(age). Returns (state, deaths, dead biomass)."""
    u = stream.uniform(Phase.DEATH, state.cells, _plant_lanes(state.n_species, state.m))
    kill = state.alive & (u < death_probability(state.age, table.column()))
    return _remove_plants(state, kill, constants)


def plant_heights(state: FineState, table: SpeciesTable) -> np.ndarray:
    return allometry.height(state.diameter, table.column(), validate=False)


def plant_leaf_area_above(state: FineState, table: SpeciesTable) -> np.ndarray:
    """Leaf area of all strictly taller plants in the same cell, for every plant slot."""
    col = table.column()
    n_cells = state.n_cells
    if n_cells == 0:
        return np.zeros(state.alive.shape)
    heights = np.where(state.alive, plant_heights(state, table), -np.inf).reshape(n_cells, -1)
    leaf = np.where(state.alive, allometry.leaf_area_single(state.diameter, col, validate=False),
                    0.0).reshape(n_cells, -1)

    order = np.argsort(-heights, axis=1, kind="stable")
    h_sorted = np.take_along_axis(heights, order, axis=1)
    la_sorted = np.take_along_axis(leaf, order, axis=1)
    running = np.cumsum(la_sorted, axis=1)
    before = np.zeros_like(running)
    before[:, 1:] = running[:, :-1]

    # plants of equal height do not shade each other: use the sum at the start of the tie
    positions = np.arange(heights.shape[1])
    starts = np.ones(h_sorted.shape, dtype=bool)
    starts[:, 1:] = h_sorted[:, 1:] != h_sorted[:, :-1]
    first = np.maximum.accumulate(np.where(starts, positions, 0), axis=1)
    above_sorted = np.take_along_axis(before, first, axis=1)

    above = np.empty_like(above_sorted)
    np.put_along_axis(above, order, above_sorted, axis=1)
    return np.where(state.alive, above.reshape(state.alive.shape), 0.0)


def leaf_area_above_fine(state: FineState, h, table: SpeciesTable) -> np.ndarray:
    """Leaf area (m2) of every plant taller than h, per cell. h is a scalar or per-cell array."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise DomainError("h must be non-negative")
    h = np.broadcast_to(h, (state.n_cells,))[:, None, None]
    col = table.column()
    taller = state.alive & (plant_heights(state, table) > h)
    leaf = np.where(taller, allometry.leaf_area_single(state.diameter, col, validate=False), 0.0)
    return cell_total(leaf)


def cell_basal_area_fine(state: FineState) -> np.ndarray:
    ba = np.where(state.alive, allometry.basal_area_single(state.diameter, validate=False), 0.0)
    return cell_total(ba)


def growth_rates_fine(state: FineState, geom, table: SpeciesTable,
                      constants: EngineConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Diameter increment (cm) each plant would add this year, from the current state."""
    col = table.column()
    ba_cell = cell_basal_area_fine(state)[:, None, None]
    la_above = plant_leaf_area_above(state, table)
    factors = allometry.growth_factors(ba_cell, la_above, state.diameter, col, geom, constants, validate=False)
    inc = allometry.increment_from(col.g_max, factors, col.terrain_multiplier(state.terrain))
    return np.where(state.alive, inc, 0.0)


def grow_plants_fine(state: FineState, geom, table: SpeciesTable,
                     constants: EngineConstants = DEFAULT_CONSTANTS, increments=None) -> FineState:
    """Add the growth increment to every live plant (capped at d_max) and age it by one year."""
    if increments is None:
        increments = growth_rates_fine(state, geom, table, constants)
    col = table.column()
    grown = np.minimum(state.diameter + increments, col.d_max)
    return replace(
        state,
        diameter=np.where(state.alive, grown, 0.0),
        age=np.where(state.alive, state.age + 1, 0),
    )


def germination_counts(n_plants, seed_bank, terrain, m: int, cells, stream: KeyedStream,
                       table: SpeciesTable) -> np.ndarray:
    """min(Binomial(seed_bank, g_rate * terrain_factor), m - n) per (cell, species).

    Shared by both engines so a fine cell and its cohort abstraction see the same draw.
    """
    rate = np.clip(table.g_rate * table.terrain_multiplier(terrain), 0.0, 1.0)
    u = stream.uniform(Phase.GERMINATION, cells, np.arange(table.size))
    drawn = binomial(seed_bank, rate, u)
    return np.minimum(drawn, np.maximum(m - n_plants, 0))


def germinate_fine(state: FineState, stream: KeyedStream, table: SpeciesTable,
                   constants: EngineConstants = DEFAULT_CONSTANTS):
    """Fill free slots with seedlings drawn from the seed bank. Returns (state, germinated)."""
    n_germ = germination_counts(state.n_plants, state.seed_bank, state.terrain, state.m,
                                state.cells, stream, table)
    free = ~state.alive
    rank = np.cumsum(free, axis=2)
    new = free & (rank <= n_germ[..., None])
    state = replace(
        state,
        alive=state.alive | new,
        diameter=np.where(new, constants.d0, state.diameter),
        age=np.where(new, 1, state.age),
        seeds=np.where(new, 0.0, state.seeds),
        seed_bank=state.seed_bank - n_germ,
    )
    return state, n_germ


def update_seed_bank_fine(state: FineState, table: SpeciesTable) -> FineState:
    """Seed bank becomes the seed output of this year's mature plants."""
    col = table.column()
    mature = state.alive & (state.age >= col.age_adult)
    seeds = np.where(mature, col.c_seeds, 0.0)
    return replace(state, seeds=seeds, seed_bank=np.rint(_slot_total(seeds)).astype(np.int64))


def step_cell_fine(state: FineState, year: int, burning, ctx: SimulationContext):
    """Advance a block of cells by one year. Returns (state, FineTally)."""
    stream = KeyedStream(ctx.seed, year)
    table, constants = ctx.table, ctx.constants
    n_start = state.n_plants

    state = replace(state, dead_biomass=state.dead_biomass * (1.0 - constants.dead_biomass_decay))
    state, fire_dead, _ = apply_fire_fine(state, burning, stream, table, constants)
    increments = growth_rates_fine(state, ctx.geom, table, constants)
    state, natural_dead, _ = natural_death_fine(state, stream, table, constants)
    state = grow_plants_fine(state, ctx.geom, table, constants, increments=increments)
    state, germinated = germinate_fine(state, stream, table, constants)
    state = update_seed_bank_fine(state, table)

    tally = FineTally(cells=state.cells, n_start=n_start, fire_dead=fire_dead,
                      natural_dead=natural_dead, germinated=germinated, n_end=state.n_plants)
    return state, tally


def burning_for_cells(fire_map, cells, geom) -> np.ndarray:
    """Per-cell burning flags from a (rows, cols) fire map; None means no fire."""
    if fire_map is None:
        return np.zeros(len(cells), dtype=bool)
    grid = np.asarray(getattr(fire_map, "burning", fire_map), dtype=bool)
    if grid.shape != (geom.rows, geom.cols):
        raise ConfigurationError(f"Fire map shape {grid.shape} does not match landscape {geom.rows}x{geom.cols}")
    return grid.ravel()[np.asarray(cells, dtype=np.int64)]


def step_fine(state: FineState, year: int, fire_map, ctx: SimulationContext, executor=None, workers: int = 1):
    """
    Advance the whole map one year. Cells are independent within the year, so
    the sweep may split them across workers.

    Returns:
        (state, FineTally, output layers)
    """
    burning = burning_for_cells(fire_map, state.cells, ctx.geom)
    state, tally = sweep(lambda block, fires: step_cell_fine(block, year, fires, ctx),
                         state, (burning,), executor=executor, workers=workers)
    return state, tally, output_layers(state, ctx)


def initialize_fine(ctx: SimulationContext, cells, terrain, initial_plants: float) -> FineState:
    """
    Random initial plants: per species Poisson(initial_plants / S) truncated at m,
    diameters uniform on [init_d_min, init_d_max], ages uniform on 1..init_age_max.
    The seed bank starts as the seed output of those plants.
    """
    table, constants, m = ctx.table, ctx.constants, ctx.m
    cells = np.asarray(cells, dtype=np.int64)
    n_species = table.size
    state = FineState.empty(cells, terrain, n_species, m)
    if cells.size == 0 or initial_plants <= 0:
        return state

    lam = initial_plants / n_species
    counts = np.minimum(poisson(lam, keyed_uniform(ctx.seed, 0, Phase.INIT_COUNT, cells, np.arange(n_species))), m)
    lanes = _plant_lanes(n_species, m)
    alive = np.arange(m)[None, None, :] < counts[..., None]

    col = table.column()
    u_d = keyed_uniform(ctx.seed, 0, Phase.INIT_DIAMETER, cells, lanes)
    diameter = constants.init_d_min + (constants.init_d_max - constants.init_d_min) * u_d
    diameter = np.minimum(diameter, col.d_max)
    age = uniform_int(1, constants.init_age_max, keyed_uniform(ctx.seed, 0, Phase.INIT_AGE, cells, lanes))
    age = np.minimum(age, col.age_max.astype(np.int64))

    state = replace(state, alive=alive, diameter=np.where(alive, diameter, 0.0), age=np.where(alive, age, 0))
    return update_seed_bank_fine(state, table)


def output_layers(state: FineState, ctx: SimulationContext) -> dict:
    """Per (cell, species) values of the six output variables."""
    col = ctx.table.column()
    alive, d = state.alive, state.diameter
    leaf = _slot_total(np.where(alive, allometry.leaf_area_single(d, col, validate=False), 0.0))
    return {
        "basal_area": _slot_total(np.where(alive, allometry.basal_area_single(d, validate=False), 0.0)),
        "density": state.n_plants.astype(float),
        "biomass": _slot_total(np.where(alive, allometry.biomass_single(d, ctx.constants), 0.0)),
        "lai": leaf / ctx.geom.cell_area,
        "seed_bank": state.seed_bank.astype(float),
        "dead_biomass": state.dead_biomass.copy(),
    }


def persisted_scalars(state: FineState) -> int:
    """Diameter, age and seed output are kept for every live plant."""
    return int(3 * state.n_plants.sum())
