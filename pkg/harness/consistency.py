"""
Abstraction of individual-plant state into cohorts, and the one-step
consistency check between the two engines.

For a phase delta, the check compares H(delta_fine(s)) with delta_coarse(H(s)).
Stochastic phases are evaluated in expectation: the cell is replicated under N
independent cell keys in one block, so each replicate sees its own draws.
"""

import logging
from dataclasses import replace
from typing import Dict, List

import numpy as np
from pydantic import BaseModel

import config
from landscape import coarse_engine, fine_engine
from landscape.coarse_engine import CoarseState
from landscape.domain import SimulationContext
from landscape.fine_engine import FineState
from landscape.rng import KeyedStream

logger = logging.getLogger(__name__)

PHASES = ("growth", "fire", "natural-death", "germination", "seed-bank")
STOCHASTIC_PHASES = {"fire", "natural-death", "germination"}
FIELDS = ("n", "d_ave", "age_ave", "seed_bank")

# Replicate cells are keyed from this index up, clear of real landscape indices
REPLICATE_BASE = 1 << 40


def abstraction_map(state: FineState) -> CoarseState:
    """Cohort per (cell, species): count, mean diameter, mean age; seed bank and dead biomass pass through."""
    n = state.n_plants
    d_sum = np.cumsum(np.where(state.alive, state.diameter, 0.0), axis=2)[..., -1]
    age_sum = np.cumsum(np.where(state.alive, state.age, 0), axis=2)[..., -1]
    occupied = n > 0
    safe_n = np.where(occupied, n, 1)
    return CoarseState(
        cells=state.cells.copy(),
        terrain=state.terrain.copy(),
        n=n.astype(np.int64),
        d_ave=np.where(occupied, d_sum / safe_n, 0.0),
        age_ave=np.where(occupied, age_sum / safe_n, 0.0),
        seed_bank=state.seed_bank.copy(),
        dead_biomass=state.dead_biomass.copy(),
    )


class FieldDiscrepancy(BaseModel):
    species: str
    fine_mean: float
    coarse_mean: float
    fine_se: float
    coarse_se: float
    se: float
    discrepancy: float
    relative: float


class ConsistencyRecord(BaseModel):
    phase: str
    samples: int
    seed: int
    fields: Dict[str, List[FieldDiscrepancy]]

    def max_relative(self) -> float:
        return max((d.relative for items in self.fields.values() for d in items), default=0.0)


def replicate_cell(cell: FineState, samples: int) -> FineState:
    """`samples` copies of a one-cell state, each under its own cell key."""
    index = np.zeros(samples, dtype=np.int64)
    block = cell.select(index).copy()
    return replace(block, cells=REPLICATE_BASE + np.arange(samples, dtype=np.int64))


def apply_phase(phase: str, fine: FineState, coarse: CoarseState, ctx: SimulationContext,
                stream: KeyedStream, burning: bool = True):
    """Apply one phase to both representations. Returns (fine', coarse')."""
    table, constants, geom = ctx.table, ctx.constants, ctx.geom
    if phase == "growth":
        return (fine_engine.grow_plants_fine(fine, geom, table, constants),
                coarse_engine.grow_cohort(coarse, geom, table, constants))
    if phase == "fire":
        return (fine_engine.apply_fire_fine(fine, burning, stream, table, constants)[0],
                coarse_engine.apply_fire_coarse(coarse, burning, stream, table, constants)[0])
    if phase == "natural-death":
        return (fine_engine.natural_death_fine(fine, stream, table, constants)[0],
                coarse_engine.natural_death_coarse(coarse, stream, table, constants)[0])
    if phase == "germination":
        return (fine_engine.germinate_fine(fine, stream, table, constants)[0],
                coarse_engine.germinate_coarse(coarse, stream, table, ctx.m, constants)[0])
    if phase == "seed-bank":
        return fine_engine.update_seed_bank_fine(fine, table), coarse_engine.seed_bank_coarse(coarse, table)
    raise ValueError(f"Unknown phase {phase!r}; choose from {', '.join(PHASES)}")


def _mean_se(values: np.ndarray):
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / np.sqrt(n)


def one_step_consistency(cell: FineState, phase: str, ctx: SimulationContext, samples: int = None,
                         seed: int = None, year: int = 1, burning: bool = True) -> ConsistencyRecord:
    """
    Discrepancy between abstracting after a fine phase and running the coarse phase
    on the abstraction, per field and species.

    Deterministic phases use a single replicate.
    """
    if phase not in PHASES:
        raise ValueError(f"Unknown phase {phase!r}; choose from {', '.join(PHASES)}")
    samples = samples or config.MC_SAMPLES
    if phase not in STOCHASTIC_PHASES:
        samples = 1
    seed = ctx.seed if seed is None else seed

    fine = replicate_cell(cell, samples)
    coarse = abstraction_map(fine)
    stream = KeyedStream(seed, year)
    fine_next, coarse_next = apply_phase(phase, fine, coarse, ctx, stream, burning)
    abstracted = abstraction_map(fine_next)

    fields = {}
    for name in FIELDS:
        f_mean, f_se = _mean_se(getattr(abstracted, name).astype(float))
        c_mean, c_se = _mean_se(getattr(coarse_next, name).astype(float))
        rows = []
        for s, label in enumerate(ctx.table.labels):
            diff = f_mean[s] - c_mean[s]
            scale = max(abs(f_mean[s]), abs(c_mean[s]), config.REL_EPSILON)
            rows.append(FieldDiscrepancy(
                species=label,
                fine_mean=float(f_mean[s]),
                coarse_mean=float(c_mean[s]),
                fine_se=float(f_se[s]),
                coarse_se=float(c_se[s]),
                se=float(np.hypot(f_se[s], c_se[s])),
                discrepancy=float(diff),
                relative=float(abs(diff) / scale),
            ))
        fields[name] = rows

    record = ConsistencyRecord(phase=phase, samples=samples, seed=seed, fields=fields)
    logger.info(f"Consistency [{phase}] over {samples} replicate(s): max relative discrepancy "
                f"{record.max_relative():.3g}")
    return record
