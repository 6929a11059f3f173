"""
Tests for the cohort engine.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from landscape import allometry
from landscape import coarse_engine as ce
from landscape.domain import LandscapeGeometry
from landscape.rng import KeyedStream


def _cohorts(*cohorts, terrain=2):
    return ce.CoarseState.from_cohorts([ce.Cohort(*c) for c in cohorts], terrain=terrain)


def _many(n_cells, n, d_ave, age_ave, seed_bank=0):
    state = ce.CoarseState.empty(np.arange(n_cells), np.full(n_cells, 2), 1)
    return replace(state, n=np.full((n_cells, 1), n, dtype=np.int64), d_ave=np.full((n_cells, 1), d_ave),
                   age_ave=np.full((n_cells, 1), age_ave),
                   seed_bank=np.full((n_cells, 1), seed_bank, dtype=np.int64))


def _assert_states_equal(a, b):
    for name in a._cell_fields():
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


# ---------------------------- removal formula ----------------------------

def test_removal_update_example():
    assert ce.removal_update(10.0, 5, 12.0, 2, 1.0, 200.0) == pytest.approx(26.0 / 3.0)


def test_removal_update_edges():
    assert ce.removal_update(10.0, 5, 99.0, 0, 1.0, 200.0) == 10.0
    assert ce.removal_update(10.0, 5, 12.0, 5, 1.0, 200.0) == 0.0
    # a dead mean far above the cohort mean would push the survivors below the floor
    assert ce.removal_update(10.0, 5, 40.0, 2, 1.0, 200.0) == 1.0


# ---------------------------------- fire ----------------------------------

def test_fire_without_burning_is_identity(make_table):
    state = _cohorts((20, 8.0, 12.0, 40))
    out, killed, biomass = ce.apply_fire_coarse(state, False, KeyedStream(1, 1), make_table({}))
    _assert_states_equal(out, state)
    assert killed.sum() == 0 and biomass.sum() == 0.0


def test_total_kill_empties_cohort_but_keeps_seed_bank(make_table):
    table = make_table({"fire_kill_frac": 1.0})
    state = _cohorts((20, 8.0, 12.0, 40))
    out, killed, biomass = ce.apply_fire_coarse(state, True, KeyedStream(1, 1), table)
    assert out.cohort(0, 0) == ce.Cohort(0, 0.0, 0.0, 40)
    assert killed[0, 0] == 20
    assert biomass[0, 0] > 0 and out.dead_biomass[0, 0] == pytest.approx(biomass[0, 0])


def test_partial_fire_keeps_means_in_range(make_table):
    table = make_table({"fire_kill_frac": 0.5, "d_max": 30.0, "age_max": 60})
    state = _many(500, 40, 12.0, 20.0)
    out, killed, _ = ce.apply_fire_coarse(state, True, KeyedStream(3, 2), table)
    assert np.array_equal(out.n, state.n - killed)
    live = out.n > 0
    assert np.all((out.d_ave[live] > 0) & (out.d_ave[live] <= 30.0))
    assert np.all((out.age_ave[live] >= 1.0) & (out.age_ave[live] <= 60.0))
    assert abs(killed.mean() - 20.0) < 3 * np.sqrt(40 * 0.25 / 500)


# ------------------------------ natural death ------------------------------

def test_zero_mortality_is_identity(make_table):
    table = make_table({"p_b": 0.0, "p_max": 0.0})
    state = _cohorts((30, 6.0, 25.0, 10))
    out, deaths, _ = ce.natural_death_coarse(state, KeyedStream(4, 1), table)
    assert deaths.sum() == 0
    _assert_states_equal(out, state)


def test_unbiased_exact_dead_age_leaves_mean_unchanged(make_table, params):
    table = make_table({"p_b": 0.4, "p_max": 0.4})
    constants = params.constants.model_copy(update={"dead_age_bias": 0.0, "dead_sd_frac": 0.0})
    state = _many(50, 1000, 9.0, 50.0)
    out, deaths, _ = ce.natural_death_coarse(state, KeyedStream(4, 1), table, constants)
    assert deaths.min() > 0
    assert np.allclose(out.age_ave, 50.0, rtol=1e-12)
    assert np.allclose(out.d_ave, 9.0, rtol=1e-12)


def test_natural_death_binomial_mean(make_table):
    table = make_table({"p_b": 0.01, "p_max": 0.3, "age_max": 200})
    trials = 10000
    state = _many(trials, 100, 10.0, 100.0)
    _, deaths, _ = ce.natural_death_coarse(state, KeyedStream(42, 1), table)
    sigma_mean = np.sqrt(100 * 0.155 * 0.845 / trials)
    assert abs(deaths.mean() - 15.5) < 3 * sigma_mean


def test_cohort_at_age_max_dies_out(make_table):
    table = make_table({"age_max": 40})
    out, deaths, _ = ce.natural_death_coarse(_cohorts((12, 5.0, 40.0, 3)), KeyedStream(1, 1), table)
    assert deaths[0, 0] == 12
    assert out.cohort(0, 0) == ce.Cohort(0, 0.0, 0.0, 3)


# ------------------------------ areas and light ------------------------------

def test_area_examples(make_species):
    assert ce.basal_area_coarse(0, 20.0) == 0.0
    assert ce.basal_area_coarse(2, 20.0) == pytest.approx(0.0628319, abs=1e-7)
    p = make_species(c_leaf=0.16)
    assert ce.leaf_area_coarse(0, 5.0, p) == 0.0
    assert ce.leaf_area_coarse(3, 5.0, p) == pytest.approx(12.0)


def test_linear_crown_profile():
    assert ce.crown_fraction_above(5.0, 10.0) == pytest.approx(0.5)
    assert ce.crown_fraction_above(0.0, 10.0) == 1.0
    assert ce.crown_fraction_above(10.0, 10.0) == 0.0
    assert ce.crown_fraction_above(12.0, 10.0) == 0.0


def test_leaf_area_above_single_cohort(make_table):
    d = np.log(2.0) / 0.05
    table = make_table({"h_max": 20.0, "hd_a": 0.05, "c_leaf": 8.0 / d ** 2})
    state = _cohorts((1, d, 10.0, 0))
    assert allometry.height(d, table.species(0)) == pytest.approx(10.0)
    assert ce.leaf_area_above_coarse(state, 5.0, table)[0] == pytest.approx(4.0)
    assert ce.leaf_area_above_coarse(state, 0.0, table)[0] == pytest.approx(8.0)
    assert ce.leaf_area_above_coarse(state, 10.0, table)[0] == 0.0


def test_cohort_shading_comes_from_taller_cohorts(make_table):
    table = make_table({"h_max": 20.0, "hd_a": 0.05}, {"h_max": 20.0, "hd_a": 0.05})
    d_tall = np.log(2.0) / 0.05
    d_short = -np.log(0.75) / 0.05
    state = _cohorts((4, d_short, 6.0, 0), (2, d_tall, 6.0, 0))
    above = ce.cohort_leaf_area_above(state, table)
    tall_leaf = ce.leaf_area_coarse(2, d_tall, table.species(1))[0]
    assert above[0, 0] == pytest.approx(0.5 * tall_leaf)
    assert above[0, 1] == pytest.approx(0.0, abs=1e-12)


# --------------------------------- growth ---------------------------------

def test_grow_cohort_examples(make_table, geom):
    table = make_table({"d_max": 50.0})
    state = _cohorts((3, 10.0, 7.0, 0))
    out = ce.grow_cohort(state, geom, table, increments=np.array([[0.2]]))
    assert out.d_ave[0, 0] == pytest.approx(10.2, rel=1e-12)
    assert out.age_ave[0, 0] == 8.0

    still = ce.grow_cohort(state, geom, table, increments=np.array([[0.0]]))
    assert still.d_ave[0, 0] == 10.0 and still.age_ave[0, 0] == 8.0

    capped = ce.grow_cohort(_cohorts((3, 50.0, 7.0, 0)), geom, table, increments=np.array([[1.5]]))
    assert capped.d_ave[0, 0] == 50.0 and capped.age_ave[0, 0] == 8.0


def test_empty_cohort_does_not_grow(make_table, geom):
    out = ce.grow_cohort(_cohorts((0, 0.0, 0.0, 5)), geom, make_table({}))
    assert out.cohort(0, 0) == ce.Cohort(0, 0.0, 0.0, 5)


def test_grow_cohort_caps_mean_age_at_age_max(make_table, geom):
    table = make_table({"age_max": 200})
    out = ce.grow_cohort(_cohorts((20, 5.0, 199.5, 0)), geom, table, increments=np.array([[0.0]]))
    assert out.age_ave[0, 0] == 200.0


def test_fractional_mean_age_never_passes_age_max(make_table, make_ctx):
    ctx = make_ctx(table=make_table({"age_max": 200, "p_b": 0.0, "p_max": 0.0, "g_rate": 0.0}))
    state, _ = ce.step_cell_coarse(_cohorts((20, 5.0, 199.5, 0)), 1, False, ctx)
    assert state.n[0, 0] == 20
    assert 1.0 <= state.age_ave[0, 0] <= 200.0

    state, tally = ce.step_cell_coarse(state, 2, False, ctx)
    assert tally.natural_dead[0, 0] == 20
    assert state.cohort(0, 0) == ce.Cohort(0, 0.0, 0.0, 0)


def test_growth_is_linear_in_plant_count(make_table, geom):
    table = make_table({})
    state = _many(20, 1, 4.0, 5.0)
    state = replace(state, n=np.arange(1, 21, dtype=np.int64)[:, None])
    inc = np.full((20, 1), 0.3)
    out = ce.grow_cohort(state, geom, table, increments=inc)
    d_total = state.d_ave * state.n
    assert np.all(np.abs(out.d_ave - 4.3) <= 4 * np.spacing(d_total))


# ------------------------------- germination -------------------------------

def test_germination_examples(make_table, params):
    table = make_table({"g_rate": 1.0})
    stream = KeyedStream(8, 1)
    d0 = params.constants.d0

    none, n_germ = ce.germinate_coarse(_cohorts((6, 3.0, 4.0, 0)), stream, table, 100, params.constants)
    assert n_germ[0, 0] == 0 and none.cohort(0, 0) == ce.Cohort(6, 3.0, 4.0, 0)

    fresh, n_germ = ce.germinate_coarse(_cohorts((0, 0.0, 0.0, 4)), stream, table, 100, params.constants)
    assert n_germ[0, 0] == 4
    assert fresh.cohort(0, 0) == ce.Cohort(4, d0, 1.0, 0)

    mixed, _ = ce.germinate_coarse(_cohorts((2, 10.0, 6.0, 2)), stream, table, 100, params.constants)
    assert mixed.n[0, 0] == 4
    assert mixed.d_ave[0, 0] == pytest.approx(5.25)
    assert mixed.age_ave[0, 0] == pytest.approx(3.5)

    capped, n_germ = ce.germinate_coarse(_cohorts((9, 3.0, 4.0, 50)), stream, table, 10, params.constants)
    assert n_germ[0, 0] == 1 and capped.n[0, 0] == 10


# -------------------------------- seed bank --------------------------------

def test_seed_bank_examples(make_table):
    table = make_table({"age_adult": 5, "c_seeds": 50.0})
    assert ce.seed_bank_coarse(_cohorts((7, 5.0, 4.9, 99)), table).seed_bank[0, 0] == 0
    assert ce.seed_bank_coarse(_cohorts((7, 5.0, 5.0, 0)), table).seed_bank[0, 0] == 350
    assert ce.seed_bank_coarse(_cohorts((0, 0.0, 0.0, 12)), table).seed_bank[0, 0] == 0


# ----------------------------------- step -----------------------------------

def test_empty_cohorts_are_a_fixed_point(make_ctx):
    ctx = make_ctx()
    state = ce.CoarseState.empty([0], [3], ctx.table.size)
    out, tally = ce.step_cell_coarse(state, 5, True, ctx)
    _assert_states_equal(out, state)
    assert tally.n_end.sum() == 0


def test_step_conserves_plants_and_respects_bounds(make_ctx):
    ctx = make_ctx(m=50)
    geom = LandscapeGeometry(3, 3, 100.0)
    ctx = replace(ctx, geom=geom)
    cells = geom.active_indices()
    state = ce.CoarseState.empty(cells, (cells % 3) + 1, ctx.table.size)
    state = replace(state, seed_bank=np.full(state.n.shape, 200, dtype=np.int64))
    fires = np.zeros((3, 3), dtype=bool)
    for year in range(1, 31):
        fires[:] = (np.arange(9).reshape(3, 3) + year) % 5 == 0
        state, tally, layers = ce.step_coarse(state, year, fires, ctx)
        assert np.array_equal(tally.n_start - tally.fire_dead - tally.natural_dead + tally.germinated,
                              tally.n_end)
        assert np.all((state.n >= 0) & (state.n <= ctx.m))
        live = state.n > 0
        assert np.all(state.d_ave[live] > 0)
        assert np.all((state.d_ave <= ctx.table.d_max)[live])
        assert np.all((state.age_ave <= ctx.table.age_max)[live])
        assert np.all(state.d_ave[~live] == 0) and np.all(state.age_ave[~live] == 0)
        assert set(layers) == {"basal_area", "density", "biomass", "lai", "seed_bank", "dead_biomass"}


def test_threaded_step_matches_serial(make_ctx):
    geom = LandscapeGeometry(4, 4, 100.0)
    ctx = make_ctx(geom=geom)
    cells = geom.active_indices()
    state = ce.CoarseState.empty(cells, np.full(16, 2), ctx.table.size)
    state = replace(state, n=np.full(state.n.shape, 30, dtype=np.int64), d_ave=np.full(state.n.shape, 4.0),
                    age_ave=np.full(state.n.shape, 12.0))
    serial, _, _ = ce.step_coarse(state, 3, np.ones((4, 4), dtype=bool), ctx)
    with ThreadPoolExecutor(max_workers=4) as pool:
        threaded, _, _ = ce.step_coarse(state, 3, np.ones((4, 4), dtype=bool), ctx, executor=pool, workers=4)
    _assert_states_equal(serial, threaded)


def test_persisted_scalars_do_not_depend_on_density():
    sparse = _many(3, 1, 1.0, 1.0)
    dense = _many(3, 90, 1.0, 1.0)
    assert ce.persisted_scalars(sparse) == ce.persisted_scalars(dense) == 12
