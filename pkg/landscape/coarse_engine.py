"""
Cohort engine: one aggregate record per (cell, species).

A cohort carries the plant count, mean diameter, mean age and seed bank. Deaths
remove plants at a drawn "dead" mean value and the survivors' means are
recovered with the removal formula

    mean' = (mean * n - dead_mean * n_dead) / (n - n_dead)

Phase order and random keying are the same as the individual engine's, so both
engines can be stepped over the same landscape and fire maps.
"""

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from landscape import allometry
from landscape.blocks import CellBlock, sweep
from landscape.domain import DEFAULT_CONSTANTS, EngineConstants, SimulationContext, SpeciesTable, TerrainType
from landscape.fine_engine import burning_for_cells, death_probability, germination_counts
from landscape.rng import KeyedStream, Phase, binomial, normal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cohort:
    n_plants: int
    d_ave: float
    age_ave: float
    seed_bank: int


@dataclass(frozen=True)
class CoarseState(CellBlock):
    cells: np.ndarray
    terrain: np.ndarray
    n: np.ndarray
    d_ave: np.ndarray
    age_ave: np.ndarray
    seed_bank: np.ndarray
    dead_biomass: np.ndarray

    @property
    def n_species(self) -> int:
        return self.n.shape[1]

    @property
    def n_plants(self) -> np.ndarray:
        return self.n

    def cohort(self, c: int, s: int) -> Cohort:
        return Cohort(int(self.n[c, s]), float(self.d_ave[c, s]), float(self.age_ave[c, s]),
                      int(self.seed_bank[c, s]))

    @classmethod
    def empty(cls, cells, terrain, n_species: int) -> "CoarseState":
        cells = np.asarray(cells, dtype=np.int64)
        shape = (cells.shape[0], n_species)
        return cls(
            cells=cells,
            terrain=np.asarray(terrain, dtype=np.int64).reshape(cells.shape[0]),
            n=np.zeros(shape, dtype=np.int64),
            d_ave=np.zeros(shape),
            age_ave=np.zeros(shape),
            seed_bank=np.zeros(shape, dtype=np.int64),
            dead_biomass=np.zeros(shape),
        )

    @classmethod
    def from_cohorts(cls, cohorts: Sequence[Cohort], terrain=TerrainType.Slope, cell_index: int = 0) -> "CoarseState":
        """One-cell state, one cohort per species."""
        state = cls.empty([cell_index], [int(terrain)], len(cohorts))
        for s, c in enumerate(cohorts):
            state.n[0, s] = c.n_plants
            state.d_ave[0, s] = c.d_ave if c.n_plants else 0.0
            state.age_ave[0, s] = c.age_ave if c.n_plants else 0.0
            state.seed_bank[0, s] = c.seed_bank
        return state


@dataclass(frozen=True)
class CoarseTally(CellBlock):
    cells: np.ndarray
    n_start: np.ndarray
    fire_dead: np.ndarray
    natural_dead: np.ndarray
    germinated: np.ndarray
    n_end: np.ndarray


def removal_update(mean, n, dead_mean, n_dead, low, high):
    """Mean of the survivors after n_dead plants with mean dead_mean are removed.

    Unchanged where nobody died, 0 where nobody is left, otherwise clipped to [low, high].
    """
    mean, n, dead_mean, n_dead = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(n), np.asarray(dead_mean, dtype=float), np.asarray(n_dead))
    n_next = n - n_dead
    with np.errstate(divide="ignore", invalid="ignore"):
        updated = (mean * n - dead_mean * n_dead) / n_next
    updated = np.clip(updated, low, high)
    return np.where(n_dead == 0, mean, np.where(n_next > 0, updated, 0.0))


def _species_lanes(table: SpeciesTable, block: int) -> np.ndarray:
    """Lanes of the count (block 0), dead-age (1) and dead-diameter (2) draws."""
    return block * table.size + np.arange(table.size)


def _remove(state: CoarseState, n_dead, stream: KeyedStream, phase: Phase, bias: float,
            table: SpeciesTable, constants: EngineConstants):
    sd = constants.dead_sd_frac
    u_age = stream.uniform(phase, state.cells, _species_lanes(table, 1))
    u_d = stream.uniform(phase, state.cells, _species_lanes(table, 2))

    age_dead = np.clip(normal(state.age_ave * (1.0 + bias), sd * state.age_ave, u_age), 1.0, table.age_max)
    d_low = constants.d0 * 1e-3
    d_dead = np.clip(normal(state.d_ave * (1.0 + bias), sd * state.d_ave, u_d), d_low, table.d_max)

    killed_biomass = np.where(n_dead > 0, n_dead * allometry.biomass_single(d_dead, constants), 0.0)
    state = replace(
        state,
        n=state.n - n_dead,
        age_ave=removal_update(state.age_ave, state.n, age_dead, n_dead, 1.0, table.age_max),
        d_ave=removal_update(state.d_ave, state.n, d_dead, n_dead, d_low, table.d_max),
        dead_biomass=state.dead_biomass + killed_biomass,
    )
    return state, n_dead, killed_biomass


def apply_fire_coarse(state: CoarseState, burning, stream: KeyedStream, table: SpeciesTable,
                      constants: EngineConstants = DEFAULT_CONSTANTS):
    """n_dead ~ Binomial(n, fire_kill_frac) in burning cells. Returns (state, deaths, dead biomass)."""
    burning = np.broadcast_to(np.asarray(burning, dtype=bool), (state.n_cells,))
    if not burning.any():
        return state, np.zeros(state.n.shape, dtype=np.int64), np.zeros(state.n.shape)
    u = stream.uniform(Phase.FIRE, state.cells, _species_lanes(table, 0))
    n_dead = np.where(burning[:, None], binomial(state.n, table.fire_kill_frac, u), 0)
    return _remove(state, n_dead, stream, Phase.FIRE, constants.fire_dead_bias, table, constants)


def natural_death_coarse(state: CoarseState, stream: KeyedStream, table: SpeciesTable,
                         constants: EngineConstants = DEFAULT_CONSTANTS):
    """
    n_dead ~ Binomial(n, p(age_ave)); the dead are taken to be slightly older
    than average (dead_age_bias). A cohort whose mean age reached age_max dies out.
    """
    u = stream.uniform(Phase.DEATH, state.cells, _species_lanes(table, 0))
    n_dead = binomial(state.n, death_probability(state.age_ave, table), u)
    return _remove(state, n_dead, stream, Phase.DEATH, constants.dead_age_bias, table, constants)


def basal_area_coarse(n, d_ave):
    """(pi/4) * d_ave^2 * n in m2."""
    return allometry.basal_area_single(d_ave, validate=False) * n


def leaf_area_coarse(n, d_ave, p):
    return allometry.leaf_area_single(d_ave, p, validate=False) * n


def crown_fraction_above(h, top):
    """Share of a cohort's leaves above h under a linear crown profile from 0 to `top`."""
    h = np.asarray(h, dtype=float)
    top = np.asarray(top, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        partial = 1.0 - h / top
    return np.where(h <= 0, 1.0, np.where(h >= top, 0.0, partial))


def leaf_area_above_coarse(state: CoarseState, h, table: SpeciesTable) -> np.ndarray:
    """Cohort leaf area above height h, summed over species, per cell."""
    h = np.broadcast_to(np.asarray(h, dtype=float), (state.n_cells,))
    tops = allometry.height(state.d_ave, table, validate=False)
    leaf = leaf_area_coarse(state.n, state.d_ave, table)
    above = leaf * crown_fraction_above(h[:, None], tops)
    total = np.zeros(state.n_cells)
    for s in range(state.n_species):
        total = total + above[:, s]
    return total


def cohort_leaf_area_above(state: CoarseState, table: SpeciesTable) -> np.ndarray:
    """For every cohort, the leaf area of all cohorts above its mean height: (cells, species)."""
    tops = allometry.height(state.d_ave, table, validate=False)
    leaf = leaf_area_coarse(state.n, state.d_ave, table)
    out = np.zeros(state.n.shape)
    for t in range(state.n_species):
        out = out + leaf[:, t:t + 1] * crown_fraction_above(tops, tops[:, t:t + 1])
    return out


def cell_basal_area_coarse(state: CoarseState) -> np.ndarray:
    ba = basal_area_coarse(state.n, state.d_ave)
    total = np.zeros(state.n_cells)
    for s in range(state.n_species):
        total = total + ba[:, s]
    return total


def growth_rates_coarse(state: CoarseState, geom, table: SpeciesTable,
                        constants: EngineConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Increment of the mean diameter for every cohort, from the current state."""
    factors = allometry.growth_factors(cell_basal_area_coarse(state)[:, None], cohort_leaf_area_above(state, table),
                                       state.d_ave, table, geom, constants, validate=False)
    inc = allometry.increment_from(table.g_max, factors, table.terrain_multiplier(state.terrain))
    return np.where(state.n > 0, inc, 0.0)


def grow_cohort(state: CoarseState, geom, table: SpeciesTable,
                constants: EngineConstants = DEFAULT_CONSTANTS, increments=None) -> CoarseState:
    """d_total += increment * n (so d_ave += increment, capped at d_max); age_ave += 1, capped at age_max."""
    if increments is None:
        increments = growth_rates_coarse(state, geom, table, constants)
    occupied = state.n > 0
    d_total = state.d_ave * state.n + increments * state.n
    with np.errstate(divide="ignore", invalid="ignore"):
        d_ave = np.minimum(d_total / state.n, table.d_max)
    return replace(
        state,
        d_ave=np.where(occupied, d_ave, 0.0),
        age_ave=np.where(occupied, np.minimum(state.age_ave + 1.0, table.age_max), 0.0),
    )


def germinate_coarse(state: CoarseState, stream: KeyedStream, table: SpeciesTable, m: int,
                     constants: EngineConstants = DEFAULT_CONSTANTS):
    """Merge seedlings (d0, age 1) into the cohort means. Returns (state, germinated)."""
    n_germ = germination_counts(state.n, state.seed_bank, state.terrain, m, state.cells, stream, table)
    n_next = state.n + n_germ
    with np.errstate(divide="ignore", invalid="ignore"):
        d_ave = (state.d_ave * state.n + constants.d0 * n_germ) / n_next
        age_ave = (state.age_ave * state.n + 1.0 * n_germ) / n_next
    changed = n_germ > 0
    state = replace(
        state,
        n=n_next,
        d_ave=np.where(changed, d_ave, state.d_ave),
        age_ave=np.where(changed, age_ave, state.age_ave),
        seed_bank=state.seed_bank - n_germ,
    )
    return state, n_germ


def seed_bank_coarse(state: CoarseState, table: SpeciesTable) -> CoarseState:
    """All plants of a cohort count as mature once the mean age reaches age_adult."""
    mature = np.where((state.n > 0) & (state.age_ave >= table.age_adult), state.n, 0)
    return replace(state, seed_bank=np.rint(mature * table.c_seeds).astype(np.int64))


def step_cell_coarse(state: CoarseState, year: int, burning, ctx: SimulationContext):
    stream = KeyedStream(ctx.seed, year)
    table, constants = ctx.table, ctx.constants
    n_start = state.n

    state = replace(state, dead_biomass=state.dead_biomass * (1.0 - constants.dead_biomass_decay))
    state, fire_dead, _ = apply_fire_coarse(state, burning, stream, table, constants)
    increments = growth_rates_coarse(state, ctx.geom, table, constants)
    state, natural_dead, _ = natural_death_coarse(state, stream, table, constants)
    state = grow_cohort(state, ctx.geom, table, constants, increments=increments)
    state, germinated = germinate_coarse(state, stream, table, ctx.m, constants)
    state = seed_bank_coarse(state, table)

    tally = CoarseTally(cells=state.cells, n_start=n_start, fire_dead=fire_dead,
                        natural_dead=natural_dead, germinated=germinated, n_end=state.n)
    return state, tally


def step_coarse(state: CoarseState, year: int, fire_map, ctx: SimulationContext, executor=None, workers: int = 1):
    """Advance the whole map one year. Returns (state, CoarseTally, output layers)."""
    burning = burning_for_cells(fire_map, state.cells, ctx.geom)
    state, tally = sweep(lambda block, fires: step_cell_coarse(block, year, fires, ctx),
                         state, (burning,), executor=executor, workers=workers)
    return state, tally, output_layers(state, ctx)


def output_layers(state: CoarseState, ctx: SimulationContext) -> dict:
    n = state.n
    return {
        "basal_area": basal_area_coarse(n, state.d_ave),
        "density": n.astype(float),
        "biomass": n * allometry.biomass_single(state.d_ave, ctx.constants),
        "lai": leaf_area_coarse(n, state.d_ave, ctx.table) / ctx.geom.cell_area,
        "seed_bank": state.seed_bank.astype(float),
        "dead_biomass": state.dead_biomass.copy(),
    }


def persisted_scalars(state: CoarseState) -> int:
    """Count, mean diameter, mean age and seed bank for every (cell, species)."""
    return int(4 * state.n.size)
