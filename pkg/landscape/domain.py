"""
Shared domain types: terrain, functional types, species parameters, engine
constants and landscape geometry. Both engines read species traits through
`SpeciesTable`, which stacks the per-species parameters into numpy arrays so a
whole block of cells can be updated at once.
"""

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Dict, Mapping, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from errors import ConfigurationError


class TerrainType(IntEnum):
    """Terrain categories; the integer value is the code stored in terrain rasters."""
    Ridge = 1
    Slope = 2
    Valley = 3

    @classmethod
    def from_name(cls, name: str) -> "TerrainType":
        try:
            return cls[name.strip().capitalize()]
        except KeyError:
            raise ConfigurationError(f"Unknown terrain type: {name!r} (expected Ridge, Slope or Valley)")


TERRAIN_CODES = tuple(int(t) for t in TerrainType)


def _terrain_name(key) -> str:
    if isinstance(key, TerrainType):
        return key.name
    if isinstance(key, (int, np.integer)):
        return TerrainType(int(key)).name
    return TerrainType.from_name(str(key)).name


class Lifeform(str, Enum):
    Tree = "Tree"
    Shrub = "Shrub"


class FunctionalType(BaseModel):
    """Lifeform x fire-response strategy of a species group."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lifeform: Lifeform
    resprouter: bool
    fire_tolerant: bool
    label: str = ""


class SpeciesParams(BaseModel):
    """Allometric, demographic and fire-response traits of one functional type."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    functional_type: FunctionalType
    h_max: float = Field(..., gt=0, description="Maximum height (m)")
    hd_a: float = Field(..., gt=0, description="Height-diameter shape coefficient (1/cm)")
    g_max: float = Field(..., gt=0, description="Maximum annual diameter increment (cm/yr)")
    d_max: float = Field(..., gt=0, description="Maximum diameter (cm)")
    age_max: int = Field(..., gt=0, description="Maximum age (yr)")
    age_adult: int = Field(..., gt=0, description="Reproductive age (yr)")
    c_seeds: float = Field(..., ge=0, description="Seeds per mature plant per year")
    c_leaf: float = Field(..., ge=0, description="Leaf-area coefficient (m2/cm2)")
    p_b: float = Field(..., ge=0, le=1, description="Baseline annual mortality probability")
    p_max: float = Field(..., ge=0, le=1, description="Mortality probability at age_max")
    g_rate: float = Field(..., ge=0, le=1, description="Germination fraction of the seed bank")
    fire_kill_frac: float = Field(..., ge=0, le=1, description="Fraction killed by a fire event")
    terrain_factor: Dict[str, float] = Field(
        default_factory=lambda: {"Ridge": 0.8, "Slope": 1.0, "Valley": 1.2}
    )

    @field_validator("terrain_factor", mode="before")
    @classmethod
    def _normalise_terrain_keys(cls, value):
        if isinstance(value, Mapping):
            return {_terrain_name(k): v for k, v in value.items()}
        return value

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.age_adult >= self.age_max:
            raise ValueError(f"age_adult ({self.age_adult}) must be below age_max ({self.age_max})")
        if self.p_b > self.p_max:
            raise ValueError(f"p_b ({self.p_b}) must not exceed p_max ({self.p_max})")
        missing = [t.name for t in TerrainType if t.name not in self.terrain_factor]
        if missing:
            raise ValueError(f"terrain_factor is missing {', '.join(missing)}")
        negative = [name for name, v in self.terrain_factor.items() if v < 0]
        if negative:
            raise ValueError(f"terrain_factor must be non-negative ({', '.join(negative)})")
        return self

    @property
    def label(self) -> str:
        return self.functional_type.label

    def terrain_multiplier(self, terrain) -> float:
        return self.terrain_factor[_terrain_name(terrain)]


class EngineConstants(BaseModel):
    """Constants the growth, mortality and biomass formulas share across species."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    ba_max_frac: float = Field(0.04, gt=0, description="Basal area per ground area at full crowding")
    k_shade: float = Field(0.4, ge=0, description="Light extinction per unit leaf area above")
    d0: float = Field(0.5, gt=0, description="Seedling diameter (cm)")
    biomass_coef: float = Field(0.03, ge=0, description="kg per cm^biomass_exp")
    biomass_exp: float = Field(2.5, gt=0)
    dead_biomass_decay: float = Field(0.1, ge=0, le=1, description="Annual decay of dead biomass")
    dead_age_bias: float = Field(0.1, ge=0, description="Relative shift of the dead-age mean (natural death)")
    fire_dead_bias: float = Field(0.0, ge=0, description="Relative shift of the dead-age mean (fire)")
    dead_sd_frac: float = Field(0.15, ge=0, description="Dead-age sd as a fraction of the mean")
    init_d_min: float = Field(0.5, gt=0)
    init_d_max: float = Field(5.0, gt=0)
    init_age_max: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.init_d_min > self.init_d_max:
            raise ValueError("init_d_min must not exceed init_d_max")
        return self


DEFAULT_CONSTANTS = EngineConstants()


@dataclass(frozen=True)
class SpeciesTable:
    """Species traits stacked into arrays, in parameter-file order.

    Scalar traits have shape (S,) or, after `column()`, (S, 1) so they broadcast
    against per-plant arrays of shape (cells, S, m).
    """
    labels: Tuple[str, ...]
    h_max: np.ndarray
    hd_a: np.ndarray
    g_max: np.ndarray
    d_max: np.ndarray
    age_max: np.ndarray
    age_adult: np.ndarray
    c_seeds: np.ndarray
    c_leaf: np.ndarray
    p_b: np.ndarray
    p_max: np.ndarray
    g_rate: np.ndarray
    fire_kill_frac: np.ndarray
    terrain_factor: np.ndarray  # (S, 3), column = terrain code - 1
    per_plant: bool = False

    _SCALARS = ("h_max", "hd_a", "g_max", "d_max", "age_max", "age_adult", "c_seeds",
                "c_leaf", "p_b", "p_max", "g_rate", "fire_kill_frac")

    @classmethod
    def from_params(cls, species: Mapping[str, SpeciesParams]) -> "SpeciesTable":
        if not species:
            raise ConfigurationError("At least one species is required")
        labels = tuple(species)
        values = {name: np.array([getattr(species[s], name) for s in labels], dtype=float)
                  for name in cls._SCALARS}
        tf = np.array([[species[s].terrain_factor[t.name] for t in TerrainType] for s in labels], dtype=float)
        return cls(labels=labels, terrain_factor=tf, **values)

    @property
    def size(self) -> int:
        return len(self.labels)

    def column(self) -> "SpeciesTable":
        """Same table with scalar traits shaped (S, 1) for per-plant broadcasting."""
        if self.per_plant:
            return self
        reshaped = {name: getattr(self, name)[:, None] for name in self._SCALARS}
        return replace(self, per_plant=True, **reshaped)

    def terrain_multiplier(self, terrain_codes) -> np.ndarray:
        """Growth/germination multiplier per (cell, species) for an array of terrain codes."""
        codes = np.asarray(terrain_codes, dtype=np.int64)
        tf = self.terrain_factor[:, codes - 1].T  # (C, S)
        return tf[..., None] if self.per_plant else tf

    def species(self, index: int) -> "SpeciesTable":
        """Single-species slice, still as a table."""
        sl = slice(index, index + 1)
        sliced = {name: getattr(self, name)[sl] for name in self._SCALARS}
        return replace(self, labels=(self.labels[index],), terrain_factor=self.terrain_factor[sl], **sliced)


@dataclass(frozen=True)
class LandscapeGeometry:
    """rows x cols grid of equal square cells; null cells never hold vegetation."""
    rows: int
    cols: int
    cell_area: float
    null_mask: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ConfigurationError(f"Geometry needs rows, cols > 0 (got {self.rows}x{self.cols})")
        if not self.cell_area > 0:
            raise ConfigurationError(f"cell_area must be positive (got {self.cell_area})")
        mask = self.null_mask
        if mask is None:
            mask = np.zeros((self.rows, self.cols), dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.rows, self.cols):
            raise ConfigurationError(f"null_mask shape {mask.shape} does not match {self.rows}x{self.cols}")
        object.__setattr__(self, "null_mask", mask)

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def cell_side(self) -> float:
        return float(np.sqrt(self.cell_area))

    def active_indices(self) -> np.ndarray:
        """Flat (row-major) indices of the non-null cells, ascending."""
        return np.flatnonzero(~self.null_mask.ravel())

    @property
    def n_active(self) -> int:
        return int((~self.null_mask).sum())


@dataclass(frozen=True)
class SimulationContext:
    """Everything a year step reads besides the state itself."""
    geom: LandscapeGeometry
    table: SpeciesTable
    constants: EngineConstants
    seed: int
    m: int

    def __post_init__(self):
        if self.m <= 0:
            raise ConfigurationError(f"m (max plants per species per cell) must be positive, got {self.m}")
