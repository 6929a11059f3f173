"""
Run manifest and runtime record.

manifest.json holds everything needed to re-run an engine bit-identically and
the inventory of files it produced; it never changes between reruns.
runtime.json holds wall-clock measurements and the worker count, which do.
"""

import json
import os
from typing import Any, Dict, List

from pydantic import BaseModel, ConfigDict, Field

MANIFEST_FILE = "manifest.json"
RUNTIME_FILE = "runtime.json"


class GeometryEcho(BaseModel):
    rows: int
    cols: int
    cell_area: float
    n_active: int


class RunManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: str
    engine: str
    seed: int
    years: int
    m: int
    species: List[str]
    geometry: GeometryEcho
    config: Dict[str, Any]
    params: Dict[str, Any]
    fire_years: List[int] = Field(default_factory=list, description="Years with at least one burning cell")
    files: List[str] = Field(default_factory=list)


class RunTimings(BaseModel):
    engine: str
    threads: int
    init_seconds: float = 0.0
    year_seconds: List[float] = Field(default_factory=list)
    total_seconds: float = 0.0


def _dump(model: BaseModel, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model.model_dump(mode="json"), f, indent=2, sort_keys=True)
        f.write("\n")


def write_manifest(directory, manifest: RunManifest) -> str:
    path = os.path.join(directory, MANIFEST_FILE)
    _dump(manifest, path)
    return path


def read_manifest(directory) -> RunManifest:
    with open(os.path.join(directory, MANIFEST_FILE), "r", encoding="utf-8") as f:
        return RunManifest.model_validate(json.load(f))


def write_timings(directory, timings: RunTimings) -> str:
    path = os.path.join(directory, RUNTIME_FILE)
    _dump(timings, path)
    return path


def read_timings(directory) -> RunTimings:
    """Timings of a run; an absent runtime.json reads as zero seconds."""
    path = os.path.join(directory, RUNTIME_FILE)
    if not os.path.exists(path):
        return RunTimings(engine="unknown", threads=0)
    with open(path, "r", encoding="utf-8") as f:
        return RunTimings.model_validate(json.load(f))
