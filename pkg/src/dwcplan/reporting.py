"""Deterministic result tables and run manifests.

Writers emit identical bytes for identical inputs: floats are rendered
with ``repr`` (shortest round-trip form), JSON keys are sorted, and
nothing time- or host-dependent is recorded. Tables are plain
comma-separated text with one header row; infinities spell ``inf`` so
every cell reparses as a float.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from . import __version__
from .corridor import CorridorTrajectory
from .energy import DemandProfile
from .planner import (
    Algorithm1Result,
    ComparisonReport,
    PlanningDesign,
    SitingSweep,
    ValidationReport,
)
from .scenarios import ScenarioSpec

__all__ = [
    "write_table",
    "write_json",
    "jsonable",
    "run_manifest",
    "trajectory_tables",
    "demand_tables",
    "siting_tables",
    "design_table",
    "scenario_designs_table",
    "family_capital_table",
    "validation_table",
    "comparison_table",
    "algorithm1_tables",
    "write_tables",
]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def write_table(path: str, header: list[str], rows) -> None:
    """One comma-separated table with a header row and ``\\n`` line
    endings regardless of platform."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return "inf" if v == math.inf else "-inf" if v == -math.inf else v
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_manifest(command: str, options: dict, inputs: dict) -> dict:
    """Everything needed to reproduce a run: tool version, the fully
    inlined input documents, and the effective options."""
    manifest = {
        "tool": {"name": "dwcplan", "version": __version__},
        "command": command,
        "options": options,
        "inputs": inputs,
    }
    ensemble = inputs.get("ensemble")
    if isinstance(ensemble, dict) and "master_seed" in ensemble:
        manifest["seeds"] = {"master_seed": ensemble["master_seed"]}
    return manifest


# ---------------------------------------------------------------------------
# table builders: each returns {name: (header, rows)}

def trajectory_tables(traj: CorridorTrajectory) -> dict:
    n = traj.n_cells
    t_total = traj.horizon_steps
    dt = traj.dt_h
    cell_cols = [f"cell_{i}" for i in range(n)]

    def state_rows(array):
        for k in range(t_total + 1):
            yield [k, k * dt, *array[k]]

    def flow_rows():
        for k in range(t_total):
            yield [k, k * dt, *traj.flow[k]]

    tables = {
        "density": (["step", "time_h", *cell_cols], state_rows(traj.rho)),
        "speed": (["step", "time_h", *cell_cols], state_rows(traj.speed)),
        "interface_flow": (
            ["step", "time_h", *[f"interface_{i}" for i in range(n + 1)]],
            flow_rows(),
        ),
    }

    on_cells = [i for i, c in enumerate(traj.cells) if c.has_on_ramp]
    off_cells = [i for i, c in enumerate(traj.cells) if c.has_off_ramp]
    if on_cells or off_cells:
        header = [
            "step",
            "time_h",
            *[f"on_ramp_{i}" for i in on_cells],
            *[f"off_ramp_{i}" for i in off_cells],
        ]

        def ramp_rows():
            for k in range(t_total):
                yield [
                    k,
                    k * dt,
                    *traj.on_ramp_flow[k, on_cells],
                    *traj.off_ramp_flow[k, off_cells],
                ]

        tables["ramp_flow"] = (header, ramp_rows())
    return tables


def demand_tables(profile: DemandProfile) -> dict:
    t_total = profile.horizon_steps
    dt = profile.dt_h
    totals = profile.p_mw.sum(axis=0)

    def power_rows():
        for k in range(t_total):
            yield [k, k * dt, totals[k], *profile.p_mw[:, k]]

    tables = {
        "bus_power": (
            [
                "step",
                "time_h",
                "total_mw",
                *[f"bus_{b}_mw" for b in range(profile.n_buses)],
            ],
            power_rows(),
        )
    }
    if profile.cell_energy_kwh is not None:
        n = profile.cell_energy_kwh.shape[0]

        def energy_rows():
            for k in range(t_total):
                yield [k, k * dt, *profile.cell_energy_kwh[:, k]]

        tables["cell_energy"] = (
            ["step", "time_h", *[f"cell_{i}_kwh" for i in range(n)]],
            energy_rows(),
        )
    return tables


def siting_tables(sweep: SitingSweep) -> dict:
    return {
        "siting_curve": (
            ["total_units", "total_cost_usd"],
            ([k, cost] for k, cost in sweep.curve),
        ),
        "siting_allocation": (
            ["bus", "units"],
            ([b, sweep.best.allocation[b]] for b in sorted(sweep.best.allocation)),
        ),
    }


def design_table(design: PlanningDesign) -> tuple[list[str], list]:
    rows = []
    for bus in sorted(design.solar_mw):
        rows.append(["solar_mw", bus, design.solar_mw[bus]])
    for bus in sorted(design.es_units):
        rows.append(["storage_units", bus, design.es_units[bus]])
    rows.append(["coupling_mw", "", design.coupling_mw])
    return ["component", "bus", "value"], rows


def scenario_designs_table(
    specs: list[ScenarioSpec], designs: list[PlanningDesign]
) -> tuple[list[str], list]:
    header = [
        "scenario",
        "family",
        "seed",
        "location_cell",
        "start_step",
        "end_step",
        "solar_mw",
        "storage_units",
        "coupling_mw",
        "capital_usd",
    ]
    rows = []
    for spec, design in zip(specs, designs):
        rows.append(
            [
                spec.index,
                spec.kind.value,
                spec.seed,
                "" if spec.location_cell is None else spec.location_cell,
                "" if spec.start_step is None else spec.start_step,
                "" if spec.end_step is None else spec.end_step,
                design.total_solar_mw,
                design.total_es_units,
                design.coupling_mw,
                design.capital_usd,
            ]
        )
    return header, rows


def family_capital_table(mean_capital: dict[str, float]) -> tuple[list[str], list]:
    return (
        ["family", "mean_capital_usd"],
        [[name, mean_capital[name]] for name in sorted(mean_capital)],
    )


def validation_table(
    report: ValidationReport, specs: list[ScenarioSpec] | None = None
) -> tuple[list[str], list]:
    by_scenario = {}
    for entry in report.shortfalls:
        detail = {
            k: v for k, v in entry.items() if k not in ("scenario", "kind")
        }
        by_scenario[entry["scenario"]] = ";".join(
            f"{k}={_fmt(detail[k])}" for k in sorted(detail)
        )
    rows = []
    for idx, ok in enumerate(report.feasible):
        family = specs[idx].kind.value if specs is not None else ""
        rows.append([idx, family, ok, by_scenario.get(idx, "")])
    return ["scenario", "family", "feasible", "detail"], rows


def comparison_table(report: ComparisonReport, es_energy_mwh: float) -> tuple[list[str], list]:
    traffic, flat = report.traffic_design, report.flat_design
    rows = [
        ["solar_mw", traffic.total_solar_mw, flat.total_solar_mw],
        ["storage_units", traffic.total_es_units, flat.total_es_units],
        [
            "storage_mwh",
            traffic.total_es_units * es_energy_mwh,
            flat.total_es_units * es_energy_mwh,
        ],
        ["coupling_mw", traffic.coupling_mw, flat.coupling_mw],
        ["capital_usd", traffic.capital_usd, flat.capital_usd],
        ["total_usd", traffic.total_usd, flat.total_usd],
    ]
    return ["component", "traffic_aware", "flat_worst_case"], rows


def write_tables(out_dir: str, tables: dict) -> list[str]:
    """Write every named table as ``<name>.csv``; returns the paths."""
    paths = []
    for name in sorted(tables):
        header, rows = tables[name]
        path = os.path.join(out_dir, f"{name}.csv")
        write_table(path, header, rows)
        paths.append(path)
    return paths


def algorithm1_tables(result: Algorithm1Result) -> dict:
    """The six planning result tables."""
    tables = siting_tables(result.siting)
    tables["scenario_designs"] = scenario_designs_table(
        result.scenario_specs, result.scenario_designs
    )
    tables["family_capital"] = family_capital_table(result.family_mean_capital)
    tables["final_design"] = design_table(result.final_design)
    tables["validation"] = validation_table(result.validation, result.scenario_specs)
    return tables
