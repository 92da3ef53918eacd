"""Shared builders for test corridors and small networks."""

from __future__ import annotations

import math

import numpy as np

from dwcplan.corridor import CellParams, CorridorConfig, RampSchedule


def uniform_cells(
    n: int,
    length_mi: float = 0.5,
    v_ff: float = 60.0,
    w: float = 12.0,
    crit: float = 50.0,
    jam: float = 300.0,
    lanes: int = 4,
    on_ramp_cells: tuple[int, ...] = (),
    off_ramp_cells: tuple[int, ...] = (),
) -> list[CellParams]:
    return [
        CellParams(
            length_mi=length_mi,
            v_ff_mph=v_ff,
            w_mph=w,
            rho_crit_veh_mi=crit,
            rho_jam_veh_mi=jam,
            n_lanes=lanes,
            has_on_ramp=i in on_ramp_cells,
            has_off_ramp=i in off_ramp_cells,
        )
        for i in range(n)
    ]


def simple_config(
    cells,
    dt_h: float,
    horizon: int,
    initial_rho=0.0,
    boundary_demand=0.0,
    boundary_supply=math.inf,
) -> CorridorConfig:
    n = len(cells)
    init = np.full(n, float(initial_rho)) if np.isscalar(initial_rho) else np.asarray(initial_rho, float)
    bd = (
        np.full(horizon, float(boundary_demand))
        if np.isscalar(boundary_demand)
        else np.asarray(boundary_demand, float)
    )
    bs = (
        np.full(horizon, float(boundary_supply))
        if np.isscalar(boundary_supply)
        else np.asarray(boundary_supply, float)
    )
    return CorridorConfig(
        cells=cells,
        dt_h=dt_h,
        horizon_steps=horizon,
        initial_rho_veh_mi=init,
        boundary_demand_veh_h=bd,
        boundary_supply_veh_h=bs,
        ramps=RampSchedule.empty(horizon, n),
    )


def tiny_case_dict() -> dict:
    """A 4-cell, 3-bus case small enough for sub-second end-to-end runs."""
    cell = {
        "length_mi": 5.0,
        "v_ff_mph": 60.0,
        "w_mph": 12.0,
        "rho_crit_veh_mi": 50.0,
        "rho_jam_veh_mi": 300.0,
        "n_lanes": 2,
    }
    return {
        "corridor": {
            "dt_h": 1.0 / 12.0,
            "horizon_steps": 24,
            "cells": [dict(cell) for _ in range(4)],
            "boundary_demand_veh_h": {
                "segments": [
                    {"start_step": 0, "value": 1200.0},
                    {"start_step": 8, "value": 4000.0},
                    {"start_step": 16, "value": 1500.0},
                ]
            },
        },
        "grid": {
            "base_mva": 100.0,
            "base_kv": 34.5,
            "buses": [
                {"id": 0, "kind": "slack", "has_solar": True},
                {"id": 1, "kind": "roadway", "mapped_cells": [0, 1]},
                {"id": 2, "kind": "roadway", "mapped_cells": [2, 3]},
            ],
            "lines": [
                {"from_bus": 0, "to_bus": 1, "length_mi": 3.0},
                {"from_bus": 1, "to_bus": 2, "length_mi": 2.0},
            ],
        },
        "solar": {
            "segments": [
                {"start_step": 0, "value": 0.0},
                {"start_step": 6, "value": 0.6},
                {"start_step": 18, "value": 0.0},
            ]
        },
    }


def busy_40cell_config(horizon: int = 288) -> CorridorConfig:
    """A 40-cell corridor with active on/off ramps and a diurnal demand
    profile; heavy enough that several ramps and interfaces bind."""
    on_cells = tuple(range(2, 40, 3))
    off_cells = tuple(range(4, 40, 4))
    cells = uniform_cells(
        40,
        length_mi=5.0,
        v_ff=60.0,
        w=13.5,
        crit=180.0,
        jam=980.0,
        on_ramp_cells=on_cells,
        off_ramp_cells=off_cells,
    )
    dt = 1.0 / 12.0
    t = np.arange(horizon)
    hours = t * dt
    shape = 0.55 + 0.45 * np.sin(2 * np.pi * (hours - 7.0) / 24.0) ** 2
    bd = 6500.0 * shape
    cfg = simple_config(cells, dt, horizon, initial_rho=20.0, boundary_demand=bd)
    for i in on_cells:
        cfg.ramps.on_ramp_demand_veh_h[:, i] = 700.0 * shape
        cfg.ramps.on_ramp_max_veh_h[:, i] = 900.0
    for i in off_cells:
        cfg.ramps.off_ramp_split[:, i] = 0.06
        cfg.ramps.off_ramp_max_veh_h[:, i] = 800.0
    return cfg
