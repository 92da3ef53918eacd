"""Command-line interface.

Subcommands cover the pipeline end to end:

* ``simulate``: corridor to trajectory tables
* ``demand``: corridor to bus-level electrical load tables
* ``site``: storage siting sweep on the baseline day
* ``size``: one capacity sizing run against the baseline day
* ``plan``: full scenario-robust planning run
* ``validate``: check a saved design against a scenario ensemble
* ``compare``: traffic-aware vs flat-at-peak sizing, or the built-in
  two-load procurement example (``--motivating``)

Every run writes its result tables plus ``summary.json`` and
``run_manifest.json`` into ``--out``. The manifest embeds the fully
inlined inputs and resolved options, so ``--from-manifest`` reproduces
a run byte for byte without the original config files.

Exit codes: 0 success, 2 configuration error, 3 infeasible model, 4
solver failure. Failures print a single JSON error object to stderr.
``DWCPLAN_SOLVER`` selects the convex solver when ``--solver`` is not
given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, reporting
from .config import (
    case_study_from_dict,
    corridor_from_dict,
    ensemble_from_dict,
    load_case_sections,
    load_json,
)
from .corridor import simulate, vehicle_balance
from .errors import AssemblyError, ConfigError, InfeasibleError, SolverError
from .grid import ESUnitSpec, motivating_case
from .opf import OperationalProblem, SolverOptions, solve
from .planner import (
    PlanningDesign,
    compare_worst_case,
    resample_availability,
    run_algorithm1,
    scenario_demand,
    siting_sweep,
    solve_sizing,
    validate_design,
)
from .scenarios import generate_ensemble

__all__ = ["main", "build_parser"]


def _solver_options(name: str) -> SolverOptions:
    return SolverOptions(solver=name)


def _resolve_solver(arg: str | None) -> str:
    import cvxpy

    name = (arg or os.environ.get("DWCPLAN_SOLVER") or SolverOptions().solver).upper()
    installed = cvxpy.installed_solvers()
    if name not in installed:
        raise ConfigError(
            f"solver {name!r} is not available; installed solvers: "
            f"{', '.join(sorted(installed))}"
        )
    return name


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}", flag)
    if not values:
        raise ConfigError("expected at least one integer", flag)
    return values


def _case_from_inputs(inputs: dict):
    return case_study_from_dict(inputs["case"])


def _corridor_from_inputs(inputs: dict):
    if "corridor" in inputs:
        return corridor_from_dict(inputs["corridor"])
    return _case_from_inputs(inputs).corridor


def _ensemble_from_inputs(inputs: dict):
    return ensemble_from_dict(inputs["ensemble"])


def _load_ensemble_dict(path: str) -> dict:
    if path.startswith("bundled:"):
        from .config import bundled_data_text

        return json.loads(bundled_data_text(path[len("bundled:"):]))
    return load_json(path)


def _roadway_buses(case) -> list[int]:
    return sorted({bus for bus in case.cell_to_bus().values()})


def _scenario_demands(case, ensemble, agg: int):
    scenarios = generate_ensemble(case.corridor, ensemble)
    specs = [spec for spec, _ in scenarios]
    demands = [
        scenario_demand(config, case, agg) for _, config in scenarios
    ]
    return specs, demands


def _finish(out_dir: str, command: str, options: dict, inputs: dict, summary: dict):
    reporting.write_json(
        os.path.join(out_dir, "run_manifest.json"),
        reporting.run_manifest(command, options, inputs),
    )
    reporting.write_json(os.path.join(out_dir, "summary.json"), summary)


# ---------------------------------------------------------------------------
# subcommand cores: (options, inputs, out_dir) -> summary dict

def _run_simulate(options: dict, inputs: dict, out_dir: str) -> dict:
    corridor = _corridor_from_inputs(inputs)
    traj = simulate(corridor)
    reporting.write_tables(out_dir, reporting.trajectory_tables(traj))
    balance = vehicle_balance(traj)
    return {
        "cells": traj.n_cells,
        "steps": traj.horizon_steps,
        "dt_h": traj.dt_h,
        "max_density_veh_mi": float(traj.rho.max()),
        "min_speed_mph": float(traj.speed.min()),
        "balance": balance,
    }


def _run_demand(options: dict, inputs: dict, out_dir: str) -> dict:
    case = _case_from_inputs(inputs)
    profile = scenario_demand(case.corridor, case, options["agg"])
    reporting.write_tables(out_dir, reporting.demand_tables(profile))
    return {
        "buses": profile.n_buses,
        "steps": profile.horizon_steps,
        "dt_h": profile.dt_h,
        "peak_mw": profile.peak_mw(),
        "total_energy_mwh": profile.total_energy_mwh(),
    }


def _run_site(options: dict, inputs: dict, out_dir: str) -> dict:
    case = _case_from_inputs(inputs)
    agg = options["agg"]
    demand = scenario_demand(case.corridor, case, agg)
    gamma = resample_availability(case.solar_availability, agg)
    sweep = siting_sweep(
        case.network,
        demand,
        options["k_values"],
        case.costs,
        case.es_unit,
        gamma,
        grid_q_fraction=case.grid_q_fraction,
        solar_q_fraction=case.solar_q_fraction,
        solver=_solver_options(options["solver"]),
    )
    reporting.write_tables(out_dir, reporting.siting_tables(sweep))
    return {
        "best_total_units": sweep.best_k,
        "best_cost_usd": sweep.best.total_cost_usd,
        "selected_buses": sweep.best.selected_buses(),
        "allocation": {str(b): v for b, v in sorted(sweep.best.allocation.items())},
    }


def _run_size(options: dict, inputs: dict, out_dir: str) -> dict:
    case = _case_from_inputs(inputs)
    agg = options["agg"]
    demand = scenario_demand(case.corridor, case, agg)
    gamma = resample_availability(case.solar_availability, agg)
    placement = options["placement"]
    if placement is None:
        placement = _roadway_buses(case)
    design = solve_sizing(
        case.network,
        demand,
        placement,
        case.costs,
        case.es_unit,
        gamma,
        grid_q_fraction=case.grid_q_fraction,
        solar_q_fraction=case.solar_q_fraction,
        solver=_solver_options(options["solver"]),
    )
    header, rows = reporting.design_table(design)
    reporting.write_table(os.path.join(out_dir, "final_design.csv"), header, rows)
    reporting.write_json(os.path.join(out_dir, "design.json"), design.to_dict())
    return {
        "placement": list(placement),
        "demand_peak_mw": demand.peak_mw(),
        "design": design.to_dict(),
    }


def _run_plan(options: dict, inputs: dict, out_dir: str) -> dict:
    case = _case_from_inputs(inputs)
    ensemble = _ensemble_from_inputs(inputs)
    result = run_algorithm1(
        case,
        ensemble,
        service_level=options["service_level"],
        k_values=options["k_values"],
        agg_factor=options["agg"],
        strict_validation=options["strict"],
        solver=_solver_options(options["solver"]),
        workdir=options.get("checkpoint_dir"),
    )
    reporting.write_tables(out_dir, reporting.algorithm1_tables(result))
    reporting.write_json(
        os.path.join(out_dir, "design.json"), result.final_design.to_dict()
    )
    design = result.final_design
    return {
        "scenarios": len(result.scenario_designs),
        "chosen_family": result.chosen_family,
        "family_mean_capital_usd": result.family_mean_capital,
        "service_level": result.validation.service_level,
        "scale_iterations": result.scale_iterations,
        "solar_mw": design.total_solar_mw,
        "storage_units": design.total_es_units,
        "coupling_mw": design.coupling_mw,
        "capital_usd": design.capital_usd,
        "total_usd": design.total_usd,
    }


def _run_validate(options: dict, inputs: dict, out_dir: str) -> dict:
    case = _case_from_inputs(inputs)
    ensemble = _ensemble_from_inputs(inputs)
    design = PlanningDesign.from_dict(inputs["design"])
    agg = options["agg"]
    specs, demands = _scenario_demands(case, ensemble, agg)
    report = validate_design(
        design,
        demands,
        case.es_unit,
        resample_availability(case.solar_availability, agg),
        threshold=options["service_level"],
        strict=options["strict"],
        network=case.network if options["strict"] else None,
        grid_q_fraction=case.grid_q_fraction,
        solar_q_fraction=case.solar_q_fraction,
        solver=_solver_options(options["solver"]),
        scenario_specs=specs,
    )
    header, rows = reporting.validation_table(report, specs)
    reporting.write_table(os.path.join(out_dir, "validation.csv"), header, rows)
    return {
        "scenarios": len(demands),
        "service_level": report.service_level,
        "threshold": report.threshold,
        "passed": report.passed,
        "strict": report.strict,
    }


def _run_compare(options: dict, inputs: dict, out_dir: str) -> dict:
    if inputs.get("motivating"):
        return _run_compare_motivating(options, out_dir)
    case = _case_from_inputs(inputs)
    agg = options["agg"]
    demand = scenario_demand(case.corridor, case, agg)
    placement = options["placement"]
    if placement is None:
        placement = _roadway_buses(case)
    report = compare_worst_case(
        case.network,
        demand,
        placement,
        case.costs,
        case.es_unit,
        resample_availability(case.solar_availability, agg),
        grid_q_fraction=case.grid_q_fraction,
        solar_q_fraction=case.solar_q_fraction,
        solver=_solver_options(options["solver"]),
    )
    header, rows = reporting.comparison_table(report, case.es_unit.energy_mwh)
    reporting.write_table(os.path.join(out_dir, "comparison.csv"), header, rows)
    return {
        "demand_peak_mw": demand.peak_mw(),
        "traffic_design": report.traffic_design.to_dict(),
        "flat_design": report.flat_design.to_dict(),
        "relative_total_gap": report.relative_total_gap,
        "dominated_components": report.dominated_components,
        "flat_dominates": report.flat_dominates,
    }


def _run_compare_motivating(options: dict, out_dir: str) -> dict:
    """Procurement cost of a flat day versus a two-peak day with the
    same peak on the built-in two-load feeder."""
    network, flat, shaped, costs = motivating_case()
    quad, lin, fixed = costs.per_step_coeffs(flat.dt_h)
    solver = _solver_options(options["solver"])

    def run(profile):
        return solve(
            OperationalProblem(
                network=network,
                demand=profile,
                es_unit=ESUnitSpec(),
                solar_availability=np.zeros(profile.horizon_steps),
                cost_quad_per_step=quad,
                cost_lin_per_step=lin,
                cost_fixed_per_step=fixed,
                cycling_usd_per_mw=0.0,
            ),
            solver,
        )

    flat_sol = run(flat)
    shaped_sol = run(shaped)
    reduction = 1.0 - shaped_sol.objective_usd / flat_sol.objective_usd
    header = ["profile", "cost_usd", "peak_mw", "energy_mwh"]
    rows = [
        ["flat", flat_sol.objective_usd, flat.peak_mw(), flat.total_energy_mwh()],
        [
            "two_peak",
            shaped_sol.objective_usd,
            shaped.peak_mw(),
            shaped.total_energy_mwh(),
        ],
    ]
    reporting.write_table(os.path.join(out_dir, "comparison.csv"), header, rows)
    return {
        "flat_cost_usd": flat_sol.objective_usd,
        "shaped_cost_usd": shaped_sol.objective_usd,
        "relative_reduction": reduction,
    }


_CORES = {
    "simulate": _run_simulate,
    "demand": _run_demand,
    "site": _run_site,
    "size": _run_size,
    "plan": _run_plan,
    "validate": _run_validate,
    "compare": _run_compare,
}


# ---------------------------------------------------------------------------
# argument plumbing

def _add_common(sub):
    sub.add_argument(
        "--case",
        help="case file path or bundled:<name> (bundled:baseline, bundled:congested)",
    )
    sub.add_argument(
        "--from-manifest",
        metavar="FILE",
        help="re-run from a previous run_manifest.json instead of configs",
    )
    sub.add_argument("--out", required=True, help="output directory for artifacts")
    sub.add_argument("--solver", help="convex solver name (default: DWCPLAN_SOLVER or CLARABEL)")


def _add_agg(sub):
    sub.add_argument(
        "--agg",
        type=int,
        default=1,
        metavar="N",
        help="average demand over blocks of N corridor steps (default 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dwcplan",
        description="Traffic-driven demand modeling and microgrid planning "
        "for dynamic wireless charging corridors.",
    )
    parser.add_argument(
        "--version", action="version", version=f"dwcplan {__version__}"
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("simulate", help="run the corridor traffic simulation")
    _add_common(sub)
    sub.add_argument("--corridor", help="corridor file to simulate without a full case")

    sub = subs.add_parser("demand", help="convert traffic into electrical demand")
    _add_common(sub)
    _add_agg(sub)

    sub = subs.add_parser("site", help="sweep storage siting over total unit counts")
    _add_common(sub)
    _add_agg(sub)
    sub.add_argument(
        "--k-values",
        default="0,4,8,12,16,20,24,28,32,36,40",
        help="comma-separated total unit counts to sweep",
    )

    sub = subs.add_parser("size", help="size solar, storage, and coupling once")
    _add_common(sub)
    _add_agg(sub)
    sub.add_argument(
        "--placement",
        help="comma-separated storage buses (default: all roadway buses)",
    )

    sub = subs.add_parser("plan", help="scenario-robust planning over an ensemble")
    _add_common(sub)
    _add_agg(sub)
    sub.add_argument("--ensemble", help="ensemble file path or bundled:<name>")
    sub.add_argument(
        "--k-values",
        default="0,4,8,12,16,20,24,28,32,36,40",
        help="comma-separated total unit counts for the siting sweep",
    )
    sub.add_argument(
        "--service-level",
        type=float,
        default=1.0,
        help="required fraction of servable scenarios (default 1.0)",
    )
    sub.add_argument(
        "--strict",
        action="store_true",
        help="validate on the full network model instead of the aggregate one",
    )
    sub.add_argument(
        "--checkpoint-dir",
        help="directory for per-scenario design checkpoints (reused on rerun)",
    )

    sub = subs.add_parser("validate", help="check a saved design against an ensemble")
    _add_common(sub)
    _add_agg(sub)
    sub.add_argument("--ensemble", help="ensemble file path or bundled:<name>")
    sub.add_argument("--design", help="design.json produced by size or plan")
    sub.add_argument(
        "--service-level",
        type=float,
        default=1.0,
        help="required fraction of servable scenarios (default 1.0)",
    )
    sub.add_argument("--strict", action="store_true", help="full-network validation")

    sub = subs.add_parser(
        "compare", help="traffic-aware vs flat-at-peak worst-case sizing"
    )
    _add_common(sub)
    _add_agg(sub)
    sub.add_argument(
        "--placement",
        help="comma-separated storage buses (default: all roadway buses)",
    )
    sub.add_argument(
        "--motivating",
        action="store_true",
        help="run the built-in two-load procurement example instead of a case",
    )
    return parser


def _gather(args) -> tuple[dict, dict]:
    """Resolve CLI arguments into (options, inputs) for the core, or
    pull both from a manifest."""
    command = args.command
    if args.from_manifest:
        for flag in ("case", "ensemble", "design", "corridor", "motivating"):
            if getattr(args, flag, None):
                raise ConfigError(
                    f"--from-manifest replaces --{flag}; do not pass both"
                )
        manifest = load_json(args.from_manifest)
        if not isinstance(manifest, dict) or "command" not in manifest:
            raise ConfigError(f"{args.from_manifest} is not a run manifest")
        if manifest["command"] != command:
            raise ConfigError(
                f"manifest records a {manifest['command']!r} run, not {command!r}"
            )
        options = dict(manifest.get("options", {}))
        if args.solver:
            options["solver"] = args.solver
        return options, manifest.get("inputs", {})

    options: dict = {"solver": _resolve_solver(args.solver)}
    inputs: dict = {}

    if command == "simulate" and args.corridor:
        if args.case:
            raise ConfigError("pass either --case or --corridor, not both")
        if args.corridor.startswith("bundled:"):
            from .config import bundled_data_text

            inputs["corridor"] = json.loads(
                bundled_data_text(args.corridor[len("bundled:"):])
            )
        else:
            inputs["corridor"] = load_json(args.corridor)
    elif getattr(args, "motivating", False):
        inputs["motivating"] = True
    else:
        if not args.case:
            hint = " or --corridor" if command == "simulate" else ""
            raise ConfigError(f"{command} needs --case{hint}")
        inputs["case"] = load_case_sections(args.case)

    if hasattr(args, "agg"):
        if args.agg < 1:
            raise ConfigError(f"--agg must be >= 1, got {args.agg}")
        options["agg"] = args.agg
    if hasattr(args, "k_values"):
        options["k_values"] = _parse_int_list(args.k_values, "--k-values")
    if hasattr(args, "service_level"):
        if not 0.0 < args.service_level <= 1.0:
            raise ConfigError(
                f"--service-level must be in (0, 1], got {args.service_level}"
            )
        options["service_level"] = args.service_level
    if hasattr(args, "strict"):
        options["strict"] = bool(args.strict)
    if hasattr(args, "placement"):
        options["placement"] = (
            _parse_int_list(args.placement, "--placement")
            if args.placement
            else None
        )
    if getattr(args, "checkpoint_dir", None):
        options["checkpoint_dir"] = args.checkpoint_dir

    if command in ("plan", "validate"):
        if not args.ensemble:
            raise ConfigError(f"{command} needs --ensemble")
        inputs["ensemble"] = _load_ensemble_dict(args.ensemble)
    if command == "validate":
        if not args.design:
            raise ConfigError("validate needs --design")
        inputs["design"] = load_json(args.design)
    return options, inputs


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        options, inputs = _gather(args)
        os.makedirs(args.out, exist_ok=True)
        summary = _CORES[args.command](options, inputs, args.out)
        # checkpoints are a cache, not an input: keep them out of the manifest
        manifest_options = {
            k: v for k, v in options.items() if k != "checkpoint_dir"
        }
        _finish(args.out, args.command, manifest_options, inputs, summary)
    except ConfigError as err:
        _emit_error("config", err)
        return 2
    except AssemblyError as err:
        _emit_error("config", err)
        return 2
    except InfeasibleError as err:
        _emit_error("infeasible", err)
        return 3
    except SolverError as err:
        _emit_error("solver", err)
        return 4
    print(f"{args.command}: wrote results to {args.out}")
    return 0


def _emit_error(kind: str, err: Exception) -> None:
    obj: dict = {"error": kind, "message": str(err)}
    if isinstance(err, ConfigError) and err.path:
        obj["path"] = err.path
    if isinstance(err, InfeasibleError) and err.diagnosis:
        obj["diagnosis"] = reporting.jsonable(err.diagnosis)
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
