# ./main.py

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import config
from errors import SimulationError
from harness.bench import benchmark
from harness.cardinality import run_cardinality
from harness.compare import compare_runs, write_report
from harness.consistency import PHASES, one_step_consistency
from harness.experiment import (ENGINES, PRESETS, build_landscape, initial_states, load_params,
                                make_run_config, run_experiment, simulate)
from landscape.domain import SimulationContext

logger = logging.getLogger(__name__)


# ===================================================
# 1. HELPERS
# ===================================================

def _int_list(text: Optional[str]) -> Optional[List[int]]:
    """'1,2,8' -> [1, 2, 8]"""
    if not text:
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _fire_mode(args) -> Optional[str]:
    if getattr(args, "no_fire", False):
        return "none"
    if getattr(args, "fire_regime", False):
        return "regime"
    return None


# ===================================================
# 2. LOGIC FUNCTIONS (shared with api.py)
# ===================================================

def run_logic(preset=None, config_path=None, **overrides):
    cfg = make_run_config(preset, config_path, **overrides)
    result = run_experiment(cfg)
    summary = {
        "out_dir": result.root,
        "engines": {
            name: {"directory": run.directory, "seconds": round(run.seconds, 3),
                   "final_density": run.final_totals["density_total"],
                   "final_basal_area": run.final_totals["basal_area_total"],
                   "conservation_violations": run.violations}
            for name, run in result.engines.items()
        },
    }
    if result.comparison is not None:
        summary["density_mean_rel_diff"] = result.comparison.variables["density"].mean_over_years
        summary["basal_area_max_ratio"] = result.comparison.variables["basal_area"].max_ratio
    return summary


def compare_logic(dir_a=None, dir_b=None, run_dir=None, out_dir=None):
    if run_dir:
        dir_a, dir_b = os.path.join(run_dir, "fine"), os.path.join(run_dir, "coarse")
    if not dir_a or not dir_b:
        raise SimulationError("compare needs --a and --b, or --run")
    report = compare_runs(dir_a, dir_b)
    if out_dir:
        write_report(report, out_dir)
    return report


def consistency_logic(phase, preset="single-cell", seed=None, samples=None, warmup=20, cell=0,
                      params_path=None, m=None):
    """One-step consistency on one cell of a preset landscape after `warmup` years of fine dynamics."""
    cfg = make_run_config(preset, seed=seed, m=m, params_path=params_path, years=warmup, engine="fine")
    params = load_params(cfg)
    geom, terrain = build_landscape(cfg)
    ctx = SimulationContext(geom, params.table(), params.constants, cfg.seed, cfg.m)
    state, _ = initial_states(ctx, geom, terrain, cfg.initial_plants)
    for result in simulate("fine", state, ctx, {}, warmup):
        state = result.state
    if not 0 <= cell < state.n_cells:
        raise SimulationError(f"cell {cell} out of range: the landscape has {state.n_cells} active cells")
    return one_step_consistency(state.cell(cell), phase, ctx, samples=samples, seed=cfg.seed, year=warmup + 1)


def bench_logic(preset="single-cell", config_path=None, repeats=None, thread_counts=None, m_values=None,
                out_path=None, **overrides):
    cfg = make_run_config(preset, config_path, write_maps=False, **overrides)
    summary = benchmark(cfg, repeats=repeats, thread_counts=thread_counts, m_values=m_values)
    if out_path:
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        summary.to_csv(out_path, index=False)
        logger.info(f"Benchmark table written to {out_path}")
    return summary


def cardinality_logic(run_dir):
    if not os.path.exists(run_dir):
        raise FileNotFoundError(f"Run directory not found: {run_dir}")
    fine, coarse = run_cardinality(run_dir)
    return {"fine": fine, "coarse": coarse}


# ===================================================
# 3. CLI WRAPPER
# ===================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Dual-resolution vegetation-landscape simulator")
    sub = parser.add_subparsers(dest="cmd")

    p1 = sub.add_parser("run", help="Run an experiment and write its map series")
    p1.add_argument("--preset", choices=sorted(PRESETS))
    p1.add_argument("--config", dest="config_path", help="JSON run configuration")
    p1.add_argument("--engine", choices=list(ENGINES) + ["both"])
    p1.add_argument("--params", dest="params_path", help="Parameter file (JSON)")
    p1.add_argument("--terrain", dest="terrain_path", help="Terrain raster (1 Ridge, 2 Slope, 3 Valley, * null)")
    p1.add_argument("--terrain-kind", choices=["Ridge", "Slope", "Valley"],
                    help="Give every active cell this terrain type")
    p1.add_argument("--fires", dest="fire_dir", help="Directory of fire_<year>.asc maps")
    fire = p1.add_mutually_exclusive_group()
    fire.add_argument("--fire-regime", action="store_true", help="Sample fires from the terrain fire regime")
    fire.add_argument("--no-fire", action="store_true", help="Disable fires")
    p1.add_argument("--prefer-fire-maps", action="store_true", default=None,
                    help="Let --fires win over the fire regime")
    p1.add_argument("--years", type=int)
    p1.add_argument("--seed", type=int)
    p1.add_argument("--threads", type=int)
    p1.add_argument("--m", type=int, help="Max plants per species per cell")
    p1.add_argument("--initial-plants", type=float, help="Average initial plants per cell")
    p1.add_argument("--out", dest="out_dir")

    p2 = sub.add_parser("compare", help="Compare two finished engine runs")
    p2.add_argument("--a", dest="dir_a")
    p2.add_argument("--b", dest="dir_b")
    p2.add_argument("--run", dest="run_dir", help="Run root holding fine/ and coarse/")
    p2.add_argument("--out", dest="out_dir", help="Write comparison.json/csv here")

    p3 = sub.add_parser("consistency", help="One-step homomorphic consistency check")
    p3.add_argument("--phase", required=True, choices=PHASES)
    p3.add_argument("--preset", default="single-cell", choices=sorted(PRESETS))
    p3.add_argument("--params", dest="params_path")
    p3.add_argument("--seed", type=int)
    p3.add_argument("--samples", type=int, help=f"Replicates for stochastic phases (default {config.MC_SAMPLES})")
    p3.add_argument("--warmup", type=int, default=20, help="Fine years simulated before the check")
    p3.add_argument("--cell", type=int, default=0, help="Active-cell position to check")
    p3.add_argument("--m", type=int)

    p4 = sub.add_parser("bench", help="Time the engines over identical inputs")
    p4.add_argument("--preset", default="single-cell", choices=sorted(PRESETS))
    p4.add_argument("--config", dest="config_path")
    p4.add_argument("--engine", choices=list(ENGINES) + ["both"])
    p4.add_argument("--years", type=int)
    p4.add_argument("--seed", type=int)
    p4.add_argument("--repeats", type=int)
    p4.add_argument("--threads", type=_int_list, help="Thread counts to sweep, e.g. 1,2,8")
    p4.add_argument("--sweep-m", type=_int_list, help="Values of m to sweep, e.g. 100,200")
    p4.add_argument("--params", dest="params_path")
    p4.add_argument("--out", dest="out_path", help="CSV file for the timing table")

    p5 = sub.add_parser("cardinality", help="Persisted-scalar counts of a finished run")
    p5.add_argument("--run", dest="run_dir", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    config.configure_logging()

    try:
        if args.cmd == "run":
            summary = run_logic(
                args.preset, args.config_path, engine=args.engine, params_path=args.params_path,
                terrain_path=args.terrain_path, terrain_kind=args.terrain_kind, fire_dir=args.fire_dir,
                fire_mode=_fire_mode(args), prefer_fire_maps=args.prefer_fire_maps, years=args.years,
                seed=args.seed, threads=args.threads, m=args.m, initial_plants=args.initial_plants,
                out_dir=args.out_dir)
            print(json.dumps(summary, indent=2))
        elif args.cmd == "compare":
            report = compare_logic(args.dir_a, args.dir_b, args.run_dir, args.out_dir)
            print(json.dumps(report.model_dump(mode="json", exclude={"variables"}), indent=2))
            for var, item in report.variables.items():
                print(f"{var:>13}: mean rel diff {item.mean_over_years:.4f}, max ratio {item.max_ratio:.3f}")
        elif args.cmd == "consistency":
            record = consistency_logic(args.phase, args.preset, args.seed, args.samples, args.warmup,
                                       args.cell, args.params_path, args.m)
            print(json.dumps(record.model_dump(mode="json"), indent=2))
        elif args.cmd == "bench":
            summary = bench_logic(args.preset, args.config_path, repeats=args.repeats, thread_counts=args.threads,
                                  m_values=args.sweep_m, out_path=args.out_path, engine=args.engine,
                                  years=args.years, seed=args.seed, params_path=args.params_path)
            print(summary.to_string(index=False))
        elif args.cmd == "cardinality":
            print(json.dumps(cardinality_logic(args.run_dir), indent=2))
        else:
            parser.print_help()
            return 2
    except (SimulationError, OSError) as e:
        logger.error(str(e))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
