"""JSON configuration files: strict loading, validation, and dumping.

Every loader reports problems as :class:`ConfigError` with a dotted,
index-decorated path into the document (``cells[3].rho_jam_veh_mi``),
so a user can find the offending line in a large file quickly. Unknown
keys are rejected rather than ignored.

Time series fields accept three spellings:

* a scalar, repeated over the horizon,
* a list with exactly one value per timestep,
* ``{"segments": [{"start_step": s, "value": v}, ...]}`` for piecewise
  constant data; the first segment must start at step 0.

Where a field is allowed to be unbounded (ramp capacities, boundary
supply), the string ``"inf"`` is accepted as a value.

Paths inside a case file resolve relative to the file's directory; the
``bundled:<name>`` scheme refers to data files shipped inside the
package, e.g. ``bundled:corridor_baseline``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields as dataclass_fields
from importlib import resources

import numpy as np

from .corridor import CellParams, CorridorConfig, RampSchedule
from .energy import FleetScaling, VehicleParams
from .errors import ConfigError
from .grid import (
    BusSpec,
    CaseStudy,
    ESUnitSpec,
    GridCosts,
    LineSpec,
    Network,
    build_network,
)
from .scenarios import EnsembleSpec, SamplerParams, ScenarioKind

__all__ = [
    "GridConfig",
    "load_json",
    "series_from_value",
    "series_to_value",
    "corridor_from_dict",
    "corridor_to_dict",
    "grid_from_dict",
    "solar_from_dict",
    "ensemble_from_dict",
    "load_ensemble",
    "inline_case_sections",
    "case_study_from_dict",
    "load_case_sections",
    "load_case_study",
    "load_bundled_case_study",
    "bundled_data_text",
]

def load_json(path: str) -> dict:
    """Read one JSON document, mapping parse failures to ConfigError."""
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None


def bundled_data_text(name: str) -> str:
    """Raw text of a packaged data file (``name`` without extension)."""
    try:
        return (
            resources.files("dwcplan").joinpath(f"data/{name}.json").read_text()
        )
    except FileNotFoundError:
        raise ConfigError(f"no bundled data file named {name!r}") from None


def _load_bundled_json(name: str) -> dict:
    return json.loads(bundled_data_text(name))


# ---------------------------------------------------------------------------
# primitive readers

def _check_keys(data: dict, allowed: set[str], required: set[str], path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", path)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path)
    missing = required - set(data)
    if missing:
        raise ConfigError(f"missing required keys {sorted(missing)}", path)


def _number(value, path: str, allow_inf: bool = False) -> float:
    if isinstance(value, str):
        if allow_inf and value.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"expected a number, got string {value!r}", path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {type(value).__name__}", path)
    if not allow_inf and not math.isfinite(value):
        raise ConfigError("value must be finite", path)
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {type(value).__name__}", path)
    return value


def _boolean(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"expected true/false, got {type(value).__name__}", path)
    return value


def series_from_value(
    value, length: int, path: str, allow_inf: bool = False
) -> np.ndarray:
    """Expand one of the three series spellings to a dense array."""
    if isinstance(value, (int, float, str)) and not isinstance(value, bool):
        return np.full(length, _number(value, path, allow_inf))
    if isinstance(value, list):
        if len(value) != length:
            raise ConfigError(
                f"series has {len(value)} entries, expected {length}", path
            )
        return np.array(
            [_number(v, f"{path}[{i}]", allow_inf) for i, v in enumerate(value)]
        )
    if isinstance(value, dict):
        _check_keys(value, {"segments"}, {"segments"}, path)
        segments = value["segments"]
        if not isinstance(segments, list) or not segments:
            raise ConfigError("segments must be a non-empty list", f"{path}.segments")
        out = np.empty(length)
        prev_start = -1
        for i, seg in enumerate(segments):
            seg_path = f"{path}.segments[{i}]"
            _check_keys(seg, {"start_step", "value"}, {"start_step", "value"}, seg_path)
            start = _integer(seg["start_step"], f"{seg_path}.start_step")
            if i == 0 and start != 0:
                raise ConfigError(
                    "first segment must start at step 0", f"{seg_path}.start_step"
                )
            if start <= prev_start or start >= length:
                raise ConfigError(
                    f"start_step {start} out of order or beyond horizon {length}",
                    f"{seg_path}.start_step",
                )
            out[start:] = _number(seg["value"], f"{seg_path}.value", allow_inf)
            prev_start = start
        return out
    raise ConfigError(
        f"expected scalar, list, or segments object, got {type(value).__name__}", path
    )


def series_to_value(arr: np.ndarray) -> object:
    """Most compact faithful spelling of a series: scalar if constant,
    else a dense list; infinities become the string ``"inf"``."""
    arr = np.asarray(arr, dtype=float)
    first = arr.flat[0]
    if np.all(arr == first) or (math.isinf(first) and np.all(np.isinf(arr))):
        return "inf" if math.isinf(first) else float(first)
    return ["inf" if math.isinf(v) else float(v) for v in arr.tolist()]


# ---------------------------------------------------------------------------
# corridor

_CELL_REQUIRED = {"length_mi", "v_ff_mph", "w_mph", "rho_crit_veh_mi", "rho_jam_veh_mi"}
_CELL_ALLOWED = _CELL_REQUIRED | {"n_lanes", "has_on_ramp", "has_off_ramp"}

_CORRIDOR_REQUIRED = {"dt_h", "horizon_steps", "cells", "boundary_demand_veh_h"}
_CORRIDOR_ALLOWED = _CORRIDOR_REQUIRED | {
    "initial_rho_veh_mi",
    "boundary_supply_veh_h",
    "ramps",
    "capacity_scale",
    "incidents",
}
_INCIDENT_KEYS = {"cell", "start_step", "end_step", "factor"}
_RAMP_KEYS = {
    "on_ramp_demand_veh_h",
    "off_ramp_split",
    "on_ramp_max_veh_h",
    "off_ramp_max_veh_h",
}


def _cell_from_dict(data: dict, path: str) -> CellParams:
    _check_keys(data, _CELL_ALLOWED, _CELL_REQUIRED, path)
    try:
        return CellParams(
            length_mi=_number(data["length_mi"], f"{path}.length_mi"),
            v_ff_mph=_number(data["v_ff_mph"], f"{path}.v_ff_mph"),
            w_mph=_number(data["w_mph"], f"{path}.w_mph"),
            rho_crit_veh_mi=_number(data["rho_crit_veh_mi"], f"{path}.rho_crit_veh_mi"),
            rho_jam_veh_mi=_number(data["rho_jam_veh_mi"], f"{path}.rho_jam_veh_mi"),
            n_lanes=_integer(data.get("n_lanes", 1), f"{path}.n_lanes"),
            has_on_ramp=_boolean(data.get("has_on_ramp", False), f"{path}.has_on_ramp"),
            has_off_ramp=_boolean(
                data.get("has_off_ramp", False), f"{path}.has_off_ramp"
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def _ramp_table(
    data: dict, key: str, horizon: int, n_cells: int, default: float, path: str
) -> np.ndarray:
    """A per-cell map of series, e.g. {"3": 500.0, "7": [...]}."""
    table = np.full((horizon, n_cells), default)
    raw = data.get(key)
    if raw is None:
        return table
    if not isinstance(raw, dict):
        raise ConfigError("expected an object keyed by cell index", f"{path}.{key}")
    for cell_key, series in raw.items():
        try:
            cell = int(cell_key)
        except ValueError:
            raise ConfigError(
                f"cell key {cell_key!r} is not an integer", f"{path}.{key}"
            ) from None
        if not 0 <= cell < n_cells:
            raise ConfigError(
                f"cell {cell} outside corridor of {n_cells} cells", f"{path}.{key}"
            )
        allow_inf = key.endswith("_max_veh_h")
        table[:, cell] = series_from_value(
            series, horizon, f"{path}.{key}.{cell_key}", allow_inf
        )
    return table


def corridor_from_dict(data: dict, path: str = "corridor") -> CorridorConfig:
    """Build and validate a corridor simulation input."""
    _check_keys(data, _CORRIDOR_ALLOWED, _CORRIDOR_REQUIRED, path)
    horizon = _integer(data["horizon_steps"], f"{path}.horizon_steps")
    if horizon <= 0:
        raise ConfigError("horizon_steps must be positive", f"{path}.horizon_steps")
    raw_cells = data["cells"]
    if not isinstance(raw_cells, list) or not raw_cells:
        raise ConfigError("cells must be a non-empty list", f"{path}.cells")
    cells = [
        _cell_from_dict(c, f"{path}.cells[{i}]") for i, c in enumerate(raw_cells)
    ]
    n = len(cells)

    init = data.get("initial_rho_veh_mi", 0.0)
    if isinstance(init, list):
        if len(init) != n:
            raise ConfigError(
                f"initial_rho_veh_mi has {len(init)} entries, expected {n}",
                f"{path}.initial_rho_veh_mi",
            )
        init_arr = np.array(
            [
                _number(v, f"{path}.initial_rho_veh_mi[{i}]")
                for i, v in enumerate(init)
            ]
        )
    else:
        init_arr = np.full(n, _number(init, f"{path}.initial_rho_veh_mi"))

    demand = series_from_value(
        data["boundary_demand_veh_h"], horizon, f"{path}.boundary_demand_veh_h"
    )
    supply = series_from_value(
        data.get("boundary_supply_veh_h", "inf"),
        horizon,
        f"{path}.boundary_supply_veh_h",
        allow_inf=True,
    )

    ramps_raw = data.get("ramps", {})
    if not isinstance(ramps_raw, dict):
        raise ConfigError("ramps must be an object", f"{path}.ramps")
    unknown = set(ramps_raw) - _RAMP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", f"{path}.ramps")
    ramps = RampSchedule(
        on_ramp_demand_veh_h=_ramp_table(
            ramps_raw, "on_ramp_demand_veh_h", horizon, n, 0.0, f"{path}.ramps"
        ),
        off_ramp_split=_ramp_table(
            ramps_raw, "off_ramp_split", horizon, n, 0.0, f"{path}.ramps"
        ),
        on_ramp_max_veh_h=_ramp_table(
            ramps_raw, "on_ramp_max_veh_h", horizon, n, math.inf, f"{path}.ramps"
        ),
        off_ramp_max_veh_h=_ramp_table(
            ramps_raw, "off_ramp_max_veh_h", horizon, n, math.inf, f"{path}.ramps"
        ),
    )

    scale = None
    if "capacity_scale" in data:
        raw = data["capacity_scale"]
        if not isinstance(raw, list):
            raise ConfigError(
                "capacity_scale must be a nested list [timestep][cell]",
                f"{path}.capacity_scale",
            )
        scale = np.asarray(raw, dtype=float)
        if scale.shape != (horizon, n):
            raise ConfigError(
                f"capacity_scale shape {scale.shape} does not match "
                f"({horizon}, {n})",
                f"{path}.capacity_scale",
            )

    # compact spelling for localized capacity reductions (lane closures,
    # work zones): each entry multiplies one cell's scale over a window
    if "incidents" in data:
        raw = data["incidents"]
        if not isinstance(raw, list):
            raise ConfigError("incidents must be a list", f"{path}.incidents")
        if scale is None:
            scale = np.ones((horizon, n))
        for i, inc in enumerate(raw):
            inc_path = f"{path}.incidents[{i}]"
            _check_keys(inc, _INCIDENT_KEYS, _INCIDENT_KEYS, inc_path)
            cell = _integer(inc["cell"], f"{inc_path}.cell")
            if not 0 <= cell < n:
                raise ConfigError(
                    f"cell {cell} outside corridor of {n} cells", f"{inc_path}.cell"
                )
            start = _integer(inc["start_step"], f"{inc_path}.start_step")
            end = _integer(inc["end_step"], f"{inc_path}.end_step")
            if not 0 <= start < end <= horizon:
                raise ConfigError(
                    f"need 0 <= start_step < end_step <= {horizon}, got "
                    f"{start}, {end}",
                    inc_path,
                )
            factor = _number(inc["factor"], f"{inc_path}.factor")
            if not 0.0 <= factor <= 1.0:
                raise ConfigError(
                    f"factor must lie in [0, 1], got {factor}", f"{inc_path}.factor"
                )
            scale[start:end, cell] *= factor

    config = CorridorConfig(
        cells=cells,
        dt_h=_number(data["dt_h"], f"{path}.dt_h"),
        horizon_steps=horizon,
        initial_rho_veh_mi=init_arr,
        boundary_demand_veh_h=demand,
        boundary_supply_veh_h=supply,
        ramps=ramps,
        capacity_scale=scale,
    )
    config.validate()
    return config


def corridor_to_dict(config: CorridorConfig) -> dict:
    """Serialize a corridor configuration back to the file format."""
    cells = []
    for c in config.cells:
        entry = {
            "length_mi": c.length_mi,
            "v_ff_mph": c.v_ff_mph,
            "w_mph": c.w_mph,
            "rho_crit_veh_mi": c.rho_crit_veh_mi,
            "rho_jam_veh_mi": c.rho_jam_veh_mi,
            "n_lanes": c.n_lanes,
        }
        if c.has_on_ramp:
            entry["has_on_ramp"] = True
        if c.has_off_ramp:
            entry["has_off_ramp"] = True
        cells.append(entry)

    out = {
        "dt_h": config.dt_h,
        "horizon_steps": config.horizon_steps,
        "cells": cells,
        "initial_rho_veh_mi": [float(v) for v in config.initial_rho_veh_mi],
        "boundary_demand_veh_h": series_to_value(config.boundary_demand_veh_h),
        "boundary_supply_veh_h": series_to_value(config.boundary_supply_veh_h),
    }

    ramps = {}
    tables = {
        "on_ramp_demand_veh_h": (config.ramps.on_ramp_demand_veh_h, 0.0),
        "off_ramp_split": (config.ramps.off_ramp_split, 0.0),
        "on_ramp_max_veh_h": (config.ramps.on_ramp_max_veh_h, math.inf),
        "off_ramp_max_veh_h": (config.ramps.off_ramp_max_veh_h, math.inf),
    }
    for key, (table, default) in tables.items():
        per_cell = {}
        for cell in range(config.n_cells):
            col = table[:, cell]
            if np.all(col == default) or (
                math.isinf(default) and np.all(np.isinf(col))
            ):
                continue
            per_cell[str(cell)] = series_to_value(col)
        if per_cell:
            ramps[key] = per_cell
    if ramps:
        out["ramps"] = ramps

    if config.capacity_scale is not None:
        out["capacity_scale"] = [
            [float(v) for v in row] for row in config.capacity_scale
        ]
    return out


# ---------------------------------------------------------------------------
# grid

@dataclass
class GridConfig:
    """Electrical side of a case: feeder plus device and price data."""

    network: Network
    es_unit: ESUnitSpec
    costs: GridCosts
    power_factor: float
    solar_q_fraction: float
    grid_q_fraction: float


_GRID_REQUIRED = {"base_mva", "base_kv", "buses", "lines"}
_GRID_ALLOWED = _GRID_REQUIRED | {
    "es_unit",
    "costs",
    "power_factor",
    "solar_q_fraction",
    "grid_q_fraction",
}
_BUS_REQUIRED = {"id", "kind"}
_BUS_ALLOWED = _BUS_REQUIRED | {"mapped_cells", "v_min_pu", "v_max_pu", "has_solar"}
_LINE_REQUIRED = {"from_bus", "to_bus", "length_mi"}
_LINE_ALLOWED = _LINE_REQUIRED | {"r_ohm_per_mi", "x_ohm_per_mi", "ampacity_pu2"}


def _dataclass_from_dict(cls, data: dict, path: str):
    """Populate a flat dataclass of floats from a JSON object."""
    known = {f.name for f in dataclass_fields(cls)}
    _check_keys(data, known, set(), path)
    kwargs = {k: _number(v, f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def grid_from_dict(data: dict, path: str = "grid") -> GridConfig:
    _check_keys(data, _GRID_ALLOWED, _GRID_REQUIRED, path)

    raw_buses = data["buses"]
    if not isinstance(raw_buses, list) or not raw_buses:
        raise ConfigError("buses must be a non-empty list", f"{path}.buses")
    buses = []
    for i, raw in enumerate(raw_buses):
        bus_path = f"{path}.buses[{i}]"
        _check_keys(raw, _BUS_ALLOWED, _BUS_REQUIRED, bus_path)
        mapped = raw.get("mapped_cells", [])
        if not isinstance(mapped, list):
            raise ConfigError("mapped_cells must be a list", f"{bus_path}.mapped_cells")
        buses.append(
            BusSpec(
                id=_integer(raw["id"], f"{bus_path}.id"),
                kind=raw["kind"],
                mapped_cells=tuple(
                    _integer(c, f"{bus_path}.mapped_cells[{j}]")
                    for j, c in enumerate(mapped)
                ),
                v_min_pu=_number(raw.get("v_min_pu", 0.95), f"{bus_path}.v_min_pu"),
                v_max_pu=_number(raw.get("v_max_pu", 1.05), f"{bus_path}.v_max_pu"),
                has_solar=_boolean(
                    raw.get("has_solar", False), f"{bus_path}.has_solar"
                ),
            )
        )

    raw_lines = data["lines"]
    if not isinstance(raw_lines, list):
        raise ConfigError("lines must be a list", f"{path}.lines")
    lines = []
    for i, raw in enumerate(raw_lines):
        line_path = f"{path}.lines[{i}]"
        _check_keys(raw, _LINE_ALLOWED, _LINE_REQUIRED, line_path)
        kwargs = {
            "from_bus": _integer(raw["from_bus"], f"{line_path}.from_bus"),
            "to_bus": _integer(raw["to_bus"], f"{line_path}.to_bus"),
            "length_mi": _number(raw["length_mi"], f"{line_path}.length_mi"),
        }
        for opt in ("r_ohm_per_mi", "x_ohm_per_mi", "ampacity_pu2"):
            if opt in raw:
                kwargs[opt] = _number(raw[opt], f"{line_path}.{opt}")
        lines.append(LineSpec(**kwargs))

    network = build_network(
        buses,
        lines,
        base_mva=_number(data["base_mva"], f"{path}.base_mva"),
        base_kv=_number(data["base_kv"], f"{path}.base_kv"),
    )

    es_unit = (
        _dataclass_from_dict(ESUnitSpec, data["es_unit"], f"{path}.es_unit")
        if "es_unit" in data
        else ESUnitSpec()
    )
    costs = (
        _dataclass_from_dict(GridCosts, data["costs"], f"{path}.costs")
        if "costs" in data
        else GridCosts()
    )

    pf = _number(data.get("power_factor", 0.95), f"{path}.power_factor")
    if not 0.0 < pf <= 1.0:
        raise ConfigError(f"power_factor must be in (0, 1], got {pf}", f"{path}.power_factor")
    solar_q = _number(data.get("solar_q_fraction", 0.3), f"{path}.solar_q_fraction")
    grid_q = _number(data.get("grid_q_fraction", 0.6), f"{path}.grid_q_fraction")
    if solar_q < 0 or grid_q < 0:
        raise ConfigError("reactive fractions must be non-negative", path)

    return GridConfig(
        network=network,
        es_unit=es_unit,
        costs=costs,
        power_factor=pf,
        solar_q_fraction=solar_q,
        grid_q_fraction=grid_q,
    )


# ---------------------------------------------------------------------------
# solar availability and ensembles

def solar_from_dict(data, horizon: int, path: str = "solar") -> np.ndarray:
    """Normalized availability factors over the corridor horizon."""
    if isinstance(data, dict) and "segments" not in data:
        _check_keys(data, {"gamma"}, {"gamma"}, path)
        data = data["gamma"]
        path = f"{path}.gamma"
    gamma = series_from_value(data, horizon, path)
    bad = np.nonzero((gamma < 0.0) | (gamma > 1.0))[0]
    if bad.size:
        i = int(bad[0])
        raise ConfigError(
            f"availability must lie in [0, 1], got {gamma[i]} at step {i}",
            f"{path}[{i}]",
        )
    return gamma


_ENSEMBLE_REQUIRED = {"master_seed", "counts"}
_ENSEMBLE_ALLOWED = _ENSEMBLE_REQUIRED | {"params"}
_FAMILY_NAMES = {kind.value: kind for kind in ScenarioKind}


def ensemble_from_dict(data: dict, path: str = "ensemble") -> EnsembleSpec:
    _check_keys(data, _ENSEMBLE_ALLOWED, _ENSEMBLE_REQUIRED, path)
    raw_counts = data["counts"]
    if not isinstance(raw_counts, dict) or not raw_counts:
        raise ConfigError(
            "counts must be a non-empty object keyed by scenario family",
            f"{path}.counts",
        )
    counts = {}
    for name, count in raw_counts.items():
        if name not in _FAMILY_NAMES:
            raise ConfigError(
                f"unknown scenario family {name!r}, expected one of "
                f"{sorted(_FAMILY_NAMES)}",
                f"{path}.counts",
            )
        counts[_FAMILY_NAMES[name]] = _integer(count, f"{path}.counts.{name}")

    params = SamplerParams()
    if "params" in data:
        raw = data["params"]
        known = {f.name for f in dataclass_fields(SamplerParams)}
        _check_keys(raw, known, set(), f"{path}.params")
        kwargs = {}
        for key, value in raw.items():
            p = f"{path}.params.{key}"
            if key == "neighbor_radius":
                kwargs[key] = _integer(value, p)
            elif isinstance(value, list):
                kwargs[key] = tuple(
                    _number(v, f"{p}[{i}]") for i, v in enumerate(value)
                )
            else:
                kwargs[key] = _number(value, p)
        try:
            params = SamplerParams(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc), f"{path}.params") from None

    try:
        return EnsembleSpec(
            counts=counts,
            master_seed=_integer(data["master_seed"], f"{path}.master_seed"),
            params=params,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def load_ensemble(path: str) -> EnsembleSpec:
    """Load an ensemble file; ``bundled:<name>`` loads a packaged one."""
    if path.startswith("bundled:"):
        return ensemble_from_dict(_load_bundled_json(path[len("bundled:"):]))
    return ensemble_from_dict(load_json(path))


# ---------------------------------------------------------------------------
# case studies

_CASE_REQUIRED = {"corridor", "grid", "solar"}
_CASE_ALLOWED = _CASE_REQUIRED | {"vehicle", "fleet"}


def _resolve_section(value, base_dir: str | None, path: str) -> dict:
    """A case section is either inline, a file path, or bundled:<name>."""
    if isinstance(value, dict):
        return value
    if isinstance(value, str):
        if value.startswith("bundled:"):
            return _load_bundled_json(value[len("bundled:"):])
        if base_dir is not None and not os.path.isabs(value):
            value = os.path.join(base_dir, value)
        return load_json(value)
    raise ConfigError(
        f"expected an object or a path string, got {type(value).__name__}", path
    )


def inline_case_sections(data: dict, base_dir: str | None = None) -> dict:
    """Resolve file and ``bundled:`` references to inline content.

    The result is a self-contained case document that loads to the
    same case study; run manifests embed it so a run can be reproduced
    without the original files.
    """
    _check_keys(data, _CASE_ALLOWED, _CASE_REQUIRED, "case")
    out = dict(data)
    out["corridor"] = _resolve_section(data["corridor"], base_dir, "case.corridor")
    out["grid"] = _resolve_section(data["grid"], base_dir, "case.grid")
    # the solar section is itself a series, so scalars and lists stay
    # inline; only strings are treated as file references
    if isinstance(data["solar"], str):
        out["solar"] = _resolve_section(data["solar"], base_dir, "case.solar")
    return out


def case_study_from_dict(data: dict, base_dir: str | None = None) -> CaseStudy:
    """Assemble a full planning case from its four sections."""
    data = inline_case_sections(data, base_dir)
    corridor = corridor_from_dict(data["corridor"])
    grid = grid_from_dict(data["grid"])
    gamma = solar_from_dict(data["solar"], corridor.horizon_steps, "case.solar")

    vehicle = VehicleParams()
    if "vehicle" in data:
        vehicle = _dataclass_from_dict(VehicleParams, data["vehicle"], "case.vehicle")
    fleet = FleetScaling()
    if "fleet" in data:
        fleet = _dataclass_from_dict(FleetScaling, data["fleet"], "case.fleet")

    # surfaces duplicate mappings, and range-checks against the corridor
    for cell in grid.network.cell_to_bus():
        if cell < 0 or cell >= corridor.n_cells:
            raise ConfigError(
                f"grid maps cell {cell} but the corridor has "
                f"{corridor.n_cells} cells",
                "case.grid.buses",
            )

    return CaseStudy(
        corridor=corridor,
        network=grid.network,
        es_unit=grid.es_unit,
        costs=grid.costs,
        vehicle=vehicle,
        fleet=fleet,
        power_factor=grid.power_factor,
        solar_availability=gamma,
        solar_q_fraction=grid.solar_q_fraction,
        grid_q_fraction=grid.grid_q_fraction,
    )


def load_case_sections(path: str) -> dict:
    """Load a case file to its fully inlined section document;
    ``bundled:<name>`` loads a packaged case."""
    if path.startswith("bundled:"):
        name = path[len("bundled:"):]
        try:
            data = _load_bundled_json(f"case_{name}")
        except ConfigError:
            raise ConfigError(f"no bundled case named {name!r}") from None
        return inline_case_sections(data)
    return inline_case_sections(load_json(path), os.path.dirname(path) or ".")


def load_case_study(path: str) -> CaseStudy:
    """Load a case file; ``bundled:<name>`` loads a packaged case."""
    return case_study_from_dict(load_case_sections(path))


def load_bundled_case_study(name: str) -> CaseStudy:
    """One of the packaged planning cases: ``baseline`` (diurnal traffic
    on a 40-cell corridor, 12-bus feeder) or ``congested`` (the same
    corridor with an evening capacity incident)."""
    return load_case_study(f"bundled:{name}")
