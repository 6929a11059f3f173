"""
Parameter files: species traits, fire regime and engine constants in one JSON
document. Unknown keys are rejected and every error names the offending key.
"""

import json
import logging
from typing import Dict

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from errors import ParameterError
from landscape.disturbance import FireRegime
from landscape.domain import DEFAULT_CONSTANTS, EngineConstants, SpeciesParams, SpeciesTable

logger = logging.getLogger(__name__)


class ParamSet(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    species: Dict[str, SpeciesParams]
    fire_regime: FireRegime = Field(default_factory=FireRegime)
    constants: EngineConstants = DEFAULT_CONSTANTS

    @field_validator("species")
    @classmethod
    def _at_least_one(cls, value):
        if not value:
            raise ValueError("at least one species is required")
        return value

    def table(self) -> SpeciesTable:
        return SpeciesTable.from_params(self.species)

    @property
    def labels(self):
        return list(self.species)


def _key_path(loc) -> str:
    return ".".join(str(part) for part in loc if part not in ("__root__",))


def parse_params(document: dict, source: str = "<params>") -> ParamSet:
    """Validate an already-loaded parameter document."""
    try:
        return ParamSet.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        key = _key_path(first["loc"])
        message = first["msg"]
        # model-level checks report the field name in the message only
        for field in ("p_b", "age_adult", "terrain_factor", "init_d_min"):
            if field in message and not key.endswith(field):
                key = f"{key}.{field}" if key else field
                break
        raise ParameterError(f"{source}: {key or 'document'}: {message}", key=key)


def read_params(path) -> ParamSet:
    """
    Load and validate a parameter file.

    Raises:
        FileNotFoundError: path does not exist
        ParameterError: invalid JSON, missing or unknown key, invariant violation
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as e:
            raise ParameterError(f"{path}: not valid JSON ({e})")
    params = parse_params(document, source=str(path))
    logger.debug(f"Loaded {len(params.species)} species from {path}")
    return params


def params_echo(params: ParamSet) -> dict:
    """Plain-JSON form used in run manifests."""
    return params.model_dump(mode="json")
