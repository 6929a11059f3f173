"""
Blocks of cells and the per-year cell sweep.

Engine state is a dataclass of arrays whose first axis runs over cells. A block
can be sliced, reordered and concatenated without touching the numbers, which is
what lets the sweep split the landscape across workers.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from typing import Callable, List, Sequence

import numpy as np


def cell_total(values: np.ndarray) -> np.ndarray:
    """Sum everything after the first axis, left to right, for each cell.

    A running sum has a fixed order, so the total of a cell is the same whether the
    cell sits in a block of one or of ten thousand.
    """
    n_cells = values.shape[0]
    flat = values.reshape(n_cells, int(np.prod(values.shape[1:])))
    if flat.shape[1] == 0:
        return np.zeros(n_cells, dtype=values.dtype)
    return np.cumsum(flat, axis=1)[:, -1]


def species_total(values: np.ndarray) -> np.ndarray:
    """Stand total of a (cells, species) layer, species added in table order."""
    total = np.zeros(values.shape[0], dtype=values.dtype)
    for s in range(values.shape[1]):
        total = total + values[:, s]
    return total


class CellBlock:
    """Mixin for dataclasses whose array fields are indexed by cell first.

    Fields listed in `_shared` are carried unchanged (not per cell).
    """
    _shared: Sequence[str] = ()

    def _cell_fields(self):
        return [f.name for f in fields(self) if f.name not in self._shared]

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    def select(self, index) -> "CellBlock":
        """Sub-block by slice, index array or boolean mask over cells."""
        return replace(self, **{name: getattr(self, name)[index] for name in self._cell_fields()})

    def cell(self, i: int) -> "CellBlock":
        return self.select(slice(i, i + 1))

    def copy(self) -> "CellBlock":
        return replace(self, **{name: getattr(self, name).copy() for name in self._cell_fields()})

    @classmethod
    def concat(cls, blocks: Sequence["CellBlock"]) -> "CellBlock":
        first = blocks[0]
        if len(blocks) == 1:
            return first
        merged = {name: np.concatenate([getattr(b, name) for b in blocks], axis=0)
                  for name in first._cell_fields()}
        return replace(first, **merged)


def split_cells(n_cells: int, workers: int) -> List[slice]:
    """Contiguous slices covering n_cells, at most `workers` of them."""
    workers = max(1, min(workers, n_cells))
    bounds = np.linspace(0, n_cells, workers + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def sweep(step: Callable, state: CellBlock, per_cell: Sequence[np.ndarray] = (),
          executor: ThreadPoolExecutor = None, workers: int = 1):
    """
    Apply `step(block, *per_cell_slices)` to disjoint slices of `state` and join the
    results. `step` returns a tuple of CellBlocks; every element is concatenated.
    Returning from this function is the year barrier.
    """
    if workers <= 1 or executor is None or state.n_cells <= 1:
        return step(state, *per_cell)

    slices = split_cells(state.n_cells, workers)

    def _run(sl):
        return step(state.select(sl), *[arr[sl] for arr in per_cell])

    parts = list(executor.map(_run, slices))
    return tuple(type(items[0]).concat(list(items)) for items in zip(*parts))
