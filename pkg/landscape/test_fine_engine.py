"""
Tests for the individual-based engine.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from errors import ConfigurationError, DomainError
from landscape import allometry
from landscape import fine_engine as fe
from landscape.blocks import split_cells
from landscape.domain import LandscapeGeometry, SimulationContext, TerrainType
from landscape.rng import KeyedStream


def _one_species_cell(plants, m=100, seed_bank=None, terrain=TerrainType.Slope):
    return fe.FineState.from_plants([plants], m, terrain=terrain,
                                    seed_bank=None if seed_bank is None else [seed_bank])


def _landscape(ctx, rows=3, cols=4, initial=20.0):
    geom = LandscapeGeometry(rows, cols, 100.0)
    ctx = replace(ctx, geom=geom)
    cells = geom.active_indices()
    terrain = (cells % 3) + 1
    return ctx, fe.initialize_fine(ctx, cells, terrain, initial)


def _assert_states_equal(a, b):
    for name in a._cell_fields():
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


# --------------------------------- fire ---------------------------------

def test_fire_without_burning_is_identity(make_table):
    table = make_table({})
    cell = _one_species_cell([(5.0, 3), (8.0, 4)])
    out, killed, biomass = fe.apply_fire_fine(cell, False, KeyedStream(1, 1), table)
    _assert_states_equal(out, cell)
    assert killed.sum() == 0 and biomass.sum() == 0.0


def test_fire_with_certain_death_removes_species(make_table):
    table = make_table({"fire_kill_frac": 1.0}, {"fire_kill_frac": 0.0})
    cell = fe.FineState.from_plants([[(5.0, 3)] * 10, [(4.0, 2)] * 7], m=20)
    out, killed, biomass = fe.apply_fire_fine(cell, True, KeyedStream(1, 1), table)
    assert out.n_plants.tolist() == [[0, 7]]
    assert killed.tolist() == [[10, 0]]
    assert biomass[0, 0] == pytest.approx(10 * allometry.biomass_single(5.0))
    assert out.dead_biomass[0, 0] == pytest.approx(biomass[0, 0])


def test_fire_survivors_binomial(make_table):
    table = make_table({"fire_kill_frac": 0.5})
    cell = fe.FineState.from_plants([[(5.0, 3)] * 10000], m=10000)
    out, _, _ = fe.apply_fire_fine(cell, True, KeyedStream(42, 1), table)
    assert abs(out.n_plants[0, 0] - 5000) <= 150
    survivors = out.alive[0, 0]
    assert np.all(out.age[0, 0][survivors] == 3)


# ------------------------------ natural death ------------------------------

def test_no_mortality_means_no_deaths(make_table):
    table = make_table({"p_b": 0.0, "p_max": 0.0})
    cell = _one_species_cell([(5.0, a) for a in range(1, 50)])
    out, deaths, _ = fe.natural_death_fine(cell, KeyedStream(3, 1), table)
    assert deaths.sum() == 0
    _assert_states_equal(out, cell)


def test_plants_at_age_max_die(make_table):
    table = make_table({"p_b": 0.0, "p_max": 0.0, "age_max": 40})
    cell = _one_species_cell([(5.0, 40), (5.0, 39)])
    out, deaths, _ = fe.natural_death_fine(cell, KeyedStream(3, 1), table)
    assert deaths[0, 0] == 1
    assert [p.age for p in out.plants(0, 0)] == [39]


def test_death_probability_example(make_species):
    p = make_species(p_b=0.01, p_max=0.3, age_max=200)
    assert fe.death_probability(100, p) == pytest.approx(0.155)
    assert fe.death_probability(200, p) == 1.0


# --------------------------------- growth ---------------------------------

def test_lone_small_plant_grows_at_resp_limited_rate(make_table, geom):
    table = make_table({"g_max": 0.5, "d_max": 100.0})
    cell = _one_species_cell([(1.0, 2)])
    inc = fe.growth_rates_fine(cell, geom, table)[0, 0, 0]
    assert inc == pytest.approx(0.5 * (1 - 1.0 / 100.0), rel=1e-3)


def test_growth_ages_every_plant_and_caps_diameter(make_table, geom):
    table = make_table({"d_max": 10.0, "g_max": 5.0})
    cell = _one_species_cell([(9.99, 4), (2.0, 7), (10.0, 1)])
    out = fe.grow_plants_fine(cell, geom, table)
    ages = [p.age for p in out.plants(0, 0)]
    assert ages == [5, 8, 2]
    assert all(p.diameter <= 10.0 for p in out.plants(0, 0))
    assert out.plants(0, 0)[2].diameter == 10.0


def test_grow_with_given_increments(make_table, geom):
    table = make_table({})
    cell = _one_species_cell([(3.0, 4), (6.0, 2)])
    inc = np.zeros(cell.alive.shape)
    inc[0, 0, :2] = [0.25, 0.5]
    out = fe.grow_plants_fine(cell, geom, table, increments=inc)
    assert [p.diameter for p in out.plants(0, 0)] == [3.25, 6.5]


# ------------------------------ leaf area above ------------------------------

def test_leaf_area_above_examples(make_table):
    table = make_table({"h_max": 20.0, "hd_a": 0.05, "c_leaf": 0.16})
    cell = _one_species_cell([(5.0, 3), (7.5, 3)])
    assert fe.leaf_area_above_fine(cell, 5.0, table)[0] == pytest.approx(9.0)
    assert fe.leaf_area_above_fine(cell, 0.0, table)[0] == pytest.approx(13.0)
    assert fe.leaf_area_above_fine(cell, 25.0, table)[0] == 0.0
    with pytest.raises(DomainError):
        fe.leaf_area_above_fine(cell, -1.0, table)


def test_plant_leaf_area_above_counts_only_strictly_taller(make_table):
    table = make_table({"c_leaf": 0.16})
    cell = _one_species_cell([(5.0, 3), (7.5, 3), (7.5, 3), (2.0, 1)])
    above = fe.plant_leaf_area_above(cell, table)[0, 0]
    assert above[0] == pytest.approx(2 * 9.0)
    assert above[1] == 0.0 and above[2] == 0.0
    assert above[3] == pytest.approx(2 * 9.0 + 4.0)


def test_plant_leaf_area_above_matches_definition(make_table, rng):
    table = make_table({"c_leaf": 0.02}, {"c_leaf": 0.05, "h_max": 6.0, "hd_a": 0.2})
    plants = [[(float(d), 2) for d in rng.uniform(0.5, 40.0, 30)],
              [(float(d), 2) for d in rng.uniform(0.5, 10.0, 25)]]
    cell = fe.FineState.from_plants(plants, m=40)
    above = fe.plant_leaf_area_above(cell, table)
    heights = fe.plant_heights(cell, table)
    for s in range(2):
        for k in np.flatnonzero(cell.alive[0, s]):
            expected = fe.leaf_area_above_fine(cell, heights[0, s, k], table)[0]
            assert above[0, s, k] == pytest.approx(expected, rel=1e-12)


# ------------------------------- germination -------------------------------

def test_germination_cases(make_table):
    table = make_table({"g_rate": 1.0})
    stream = KeyedStream(5, 1)

    empty_bank = _one_species_cell([(5.0, 3)], seed_bank=0)
    out, n_germ = fe.germinate_fine(empty_bank, stream, table)
    assert n_germ[0, 0] == 0

    full = _one_species_cell([(5.0, 3)] * 4, m=4, seed_bank=100)
    out, n_germ = fe.germinate_fine(full, stream, table)
    assert n_germ[0, 0] == 0

    room_for_three = _one_species_cell([(5.0, 3)] * 2, m=5, seed_bank=5)
    out, n_germ = fe.germinate_fine(room_for_three, stream, table)
    assert n_germ[0, 0] == 3
    assert out.n_plants[0, 0] == 5
    assert out.seed_bank[0, 0] == 2
    seedlings = out.plants(0, 0)[2:]
    assert all(p.diameter == 0.5 and p.age == 1 for p in seedlings)


# -------------------------------- seed bank --------------------------------

def test_seed_bank_cases(make_table):
    table = make_table({"age_adult": 5, "c_seeds": 100.0})
    young = fe.update_seed_bank_fine(_one_species_cell([(5.0, 1), (5.0, 4)]), table)
    assert young.seed_bank[0, 0] == 0
    boundary = fe.update_seed_bank_fine(_one_species_cell([(5.0, 5)]), table)
    assert boundary.seed_bank[0, 0] == 100

    table50 = make_table({"age_adult": 5, "c_seeds": 50.0})
    mixed = _one_species_cell([(5.0, 6), (5.0, 9), (5.0, 5), (5.0, 2), (5.0, 1)])
    assert fe.update_seed_bank_fine(mixed, table50).seed_bank[0, 0] == 150


# ----------------------------------- step -----------------------------------

def test_empty_cell_is_a_fixed_point(make_ctx):
    ctx = make_ctx()
    cell = fe.FineState.empty([0], [2], ctx.table.size, ctx.m)
    out, tally = fe.step_cell_fine(cell, 1, False, ctx)
    _assert_states_equal(out, cell)
    assert tally.n_end.sum() == 0


def test_step_equals_manual_phase_composition(make_ctx):
    ctx = make_ctx()
    cell = fe.FineState.from_plants([[(4.0, 9), (2.0, 3)], [(1.0, 2)], [(6.0, 7), (3.0, 4)], []],
                                    m=ctx.m, seed_bank=[50, 10, 0, 30])
    year = 3
    stepped, _ = fe.step_cell_fine(cell, year, False, ctx)

    stream = KeyedStream(ctx.seed, year)
    s = replace(cell, dead_biomass=cell.dead_biomass * (1 - ctx.constants.dead_biomass_decay))
    s, _, _ = fe.apply_fire_fine(s, False, stream, ctx.table, ctx.constants)
    inc = fe.growth_rates_fine(s, ctx.geom, ctx.table, ctx.constants)
    s, _, _ = fe.natural_death_fine(s, stream, ctx.table, ctx.constants)
    s = fe.grow_plants_fine(s, ctx.geom, ctx.table, ctx.constants, increments=inc)
    s, _ = fe.germinate_fine(s, stream, ctx.table, ctx.constants)
    s = fe.update_seed_bank_fine(s, ctx.table)
    _assert_states_equal(stepped, s)


def test_step_is_deterministic(make_ctx):
    ctx, state = _landscape(make_ctx())
    a, _ = fe.step_cell_fine(state, 1, True, ctx)
    b, _ = fe.step_cell_fine(state, 1, True, ctx)
    _assert_states_equal(a, b)


def test_cell_order_does_not_matter(make_ctx):
    ctx, state = _landscape(make_ctx(), rows=4, cols=5)
    perm = np.random.default_rng(2).permutation(state.n_cells)
    burning = np.zeros((4, 5), dtype=bool)
    burning[1, :] = True
    straight, _, _ = fe.step_fine(state, 2, burning, ctx)
    shuffled, _, _ = fe.step_fine(state.select(perm), 2, burning, ctx)
    _assert_states_equal(straight.select(perm), shuffled)


def test_threaded_sweep_matches_serial(make_ctx):
    ctx, state = _landscape(make_ctx(), rows=4, cols=5)
    serial, serial_tally, _ = fe.step_fine(state, 1, None, ctx)
    with ThreadPoolExecutor(max_workers=3) as pool:
        threaded, threaded_tally, _ = fe.step_fine(state, 1, None, ctx, executor=pool, workers=3)
    _assert_states_equal(serial, threaded)
    assert np.array_equal(serial_tally.n_end, threaded_tally.n_end)
    assert len(split_cells(state.n_cells, 3)) == 3


def test_fire_map_geometry_must_match(make_ctx):
    ctx, state = _landscape(make_ctx())
    with pytest.raises(ConfigurationError):
        fe.step_fine(state, 1, np.zeros((2, 2), dtype=bool), ctx)


def test_all_null_map_is_a_no_op(make_ctx):
    geom = LandscapeGeometry(2, 2, 100.0, np.ones((2, 2), dtype=bool))
    ctx = make_ctx(geom=geom)
    state = fe.initialize_fine(ctx, geom.active_indices(), [], 20.0)
    out, tally, layers = fe.step_fine(state, 1, None, ctx)
    assert out.n_cells == 0
    assert layers["density"].shape == (0, ctx.table.size)


def test_conservation_and_bounds_over_years(make_ctx):
    ctx, state = _landscape(make_ctx(m=30), rows=3, cols=3, initial=40.0)
    fires = np.zeros((3, 3), dtype=bool)
    for year in range(1, 41):
        fires[:] = (np.arange(9).reshape(3, 3) + year) % 7 == 0
        state, tally, _ = fe.step_fine(state, year, fires, ctx)
        expected = tally.n_start - tally.fire_dead - tally.natural_dead + tally.germinated
        assert np.array_equal(expected, tally.n_end)
        assert np.all(state.n_plants <= ctx.m)
        col = ctx.table.column()
        alive = state.alive
        assert np.all(state.diameter[alive] > 0)
        assert np.all((state.diameter <= col.d_max)[alive])
        assert np.all(state.age[alive] >= 1)
        assert np.all((state.age <= col.age_max)[alive])
        assert np.all(state.diameter[~alive] == 0)


def test_initialization(make_ctx):
    ctx = make_ctx(m=100)
    cells = np.arange(500)
    state = fe.initialize_fine(ctx, cells, np.full(500, 2), 20.0)
    mean_total = state.n_plants.sum(axis=1).mean()
    assert abs(mean_total - 20.0) < 3 * np.sqrt(20.0 / 500)
    alive = state.alive
    assert state.diameter[alive].min() >= 0.5 and state.diameter[alive].max() <= 5.0
    assert state.age[alive].min() >= 1 and state.age[alive].max() <= 10
    mature = alive & (state.age >= ctx.table.column().age_adult)
    expected_bank = (mature * ctx.table.column().c_seeds).sum(axis=2)
    assert np.array_equal(state.seed_bank, np.rint(expected_bank).astype(np.int64))


def test_output_layers(make_ctx):
    ctx = make_ctx()
    cell = fe.FineState.from_plants([[(10.0, 3), (30.0, 3)], [], [], []], m=ctx.m, seed_bank=[7, 0, 0, 0])
    layers = fe.output_layers(cell, ctx)
    assert layers["density"][0].tolist() == [2.0, 0.0, 0.0, 0.0]
    assert layers["basal_area"][0, 0] == pytest.approx(np.pi / 4 * (100 + 900) / 1e4)
    leaf = ctx.table.c_leaf[0] * (100 + 900)
    assert layers["lai"][0, 0] == pytest.approx(leaf / ctx.geom.cell_area)
    assert layers["seed_bank"][0, 0] == 7.0
    assert fe.persisted_scalars(cell) == 6
