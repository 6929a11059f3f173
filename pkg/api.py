# ./api.py
import logging
import os
import traceback
from typing import Any, Dict, Literal, Optional

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

import config
from errors import SimulationError
from harness.consistency import PHASES
from harness.experiment import PRESETS

# Import all logic functions from main.py
from main import cardinality_logic, compare_logic, consistency_logic, run_logic

config.configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(title="Vegetation Landscape Simulator API", version=config.VERSION)


# --- Pydantic models ---
class RunRequest(BaseModel):
    preset: Optional[str] = None
    config_path: Optional[str] = None
    engine: Optional[Literal["fine", "coarse", "both"]] = None
    years: Optional[int] = None
    seed: Optional[int] = None
    threads: Optional[int] = None
    m: Optional[int] = None
    initial_plants: Optional[float] = None
    terrain_kind: Optional[str] = None
    terrain_path: Optional[str] = None
    params_path: Optional[str] = None
    fire_mode: Optional[Literal["none", "regime", "map"]] = None
    fire_dir: Optional[str] = None
    prefer_fire_maps: Optional[bool] = None
    out_dir: Optional[str] = None


class CompareRequest(BaseModel):
    dir_a: Optional[str] = None
    dir_b: Optional[str] = None
    run_dir: Optional[str] = None
    out_dir: Optional[str] = None


class ConsistencyRequest(BaseModel):
    phase: str
    preset: str = "single-cell"
    seed: Optional[int] = None
    samples: Optional[int] = None
    warmup: int = 20
    cell: int = 0


def _run_job(name: str, func, *args, **kwargs):
    """Map simulator errors onto HTTP status codes."""
    try:
        return func(*args, **kwargs)
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except (SimulationError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        traceback.print_exc()
        logger.error(f"{name} failed: {e}")
        raise HTTPException(status_code=500, detail=f"Internal server error during {name}: {e}")


# ===================================================
# BATCH JOB ENDPOINTS
# ===================================================

@app.get("/presets")
async def list_presets() -> Dict[str, Any]:
    return PRESETS


@app.post("/runs")
def create_run(data: RunRequest):
    fields = data.model_dump(exclude={"preset", "config_path"})
    summary = _run_job("run", run_logic, data.preset, data.config_path, **fields)
    logger.info(f"[API] Run written to {summary['out_dir']}")
    return summary


@app.post("/compare")
def compare(data: CompareRequest):
    report = _run_job("compare", compare_logic, data.dir_a, data.dir_b, data.run_dir, data.out_dir)
    return report.model_dump(mode="json")


@app.post("/consistency")
def consistency(data: ConsistencyRequest):
    if data.phase not in PHASES:
        raise HTTPException(status_code=400, detail=f"phase must be one of {', '.join(PHASES)}")
    record = _run_job("consistency", consistency_logic, data.phase, data.preset, data.seed, data.samples,
                      data.warmup, data.cell)
    return record.model_dump(mode="json")


@app.get("/cardinality")
def cardinality(run_dir: str = Query(..., description="Run root or engine directory")):
    if not os.path.exists(run_dir):
        raise HTTPException(status_code=404, detail=f"Run directory not found: {run_dir}")
    return _run_job("cardinality", cardinality_logic, run_dir)
