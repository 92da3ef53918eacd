"""Seeded disruption scenarios over a base corridor configuration.

Five scenario families perturb a base corridor:

- ``nv``: corridor-wide multiplicative gaussian noise on initial
  densities, boundary demand, ramp demands and off-ramp splits.
- ``cw``: a construction event at a sampled cell; on/off-ramp
  capacities at cells within the neighbor radius are reduced by a
  sampled factor for the whole day, with local density/demand jitter.
- ``acc_mainline``: a lane-blocking incident of sampled severity at a
  sampled cell and time window; capacity scales with the unblocked lane
  fraction, with local jitter of densities and ramp capacities.
- ``acc_ramp``: one on-ramp fully closed for a sampled window; nothing
  else changes.
- ``ff``: corridor exit closed all day while upstream boundary demand
  doubles.

Only ``nv`` touches the whole corridor; ``cw`` and ``acc_mainline``
leave every cell outside the event neighborhood bitwise equal to the
base, and ``acc_ramp`` leaves everything outside its window untouched.

Every sampler is a pure function of (base config, integer seed,
parameters); ensembles derive one child seed per scenario from a master
seed, so a scenario can be reproduced in isolation from its recorded
seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .corridor import CorridorConfig
from .errors import ConfigError

__all__ = [
    "ScenarioKind",
    "Severity",
    "SamplerParams",
    "ScenarioSpec",
    "EnsembleSpec",
    "draw_severity",
    "draw_window",
    "sample_nv",
    "sample_cw",
    "sample_acc_mainline",
    "sample_acc_ramp",
    "sample_ff",
    "sample_scenario",
    "generate_ensemble",
]


class ScenarioKind(str, enum.Enum):
    NV = "nv"
    CW = "cw"
    ACC_MAINLINE = "acc_mainline"
    ACC_RAMP = "acc_ramp"
    FF = "ff"


class Severity(str, enum.Enum):
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"


#: lanes blocked by an incident of each severity
BLOCKED_LANES = {Severity.MILD: 1, Severity.MODERATE: 2, Severity.SEVERE: 3}


@dataclass(frozen=True)
class SamplerParams:
    """Knobs shared by the scenario samplers."""

    sigma: float = 0.1
    cw_reduction_range: tuple[float, float] = (0.2, 0.8)
    incident_duration_range_h: tuple[float, float] = (1.0, 3.0)
    ramp_closure_duration_range_h: tuple[float, float] = (1.0, 3.0)
    neighbor_radius: int = 1
    exit_demand_multiplier: float = 2.0
    severity_weights: tuple[float, float, float] = (0.3, 0.3, 0.4)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        lo, hi = self.cw_reduction_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"cw_reduction_range must be within [0, 1], got {lo, hi}")
        for name in ("incident_duration_range_h", "ramp_closure_duration_range_h"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo <= hi:
                raise ValueError(f"{name} must be positive and ordered, got {lo, hi}")
        if self.neighbor_radius < 0:
            raise ValueError("neighbor_radius must be non-negative")
        if self.exit_demand_multiplier < 0:
            raise ValueError("exit_demand_multiplier must be non-negative")
        w = self.severity_weights
        if len(w) != 3 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"severity_weights must be 3 non-negatives summing to 1, got {w}")


@dataclass
class ScenarioSpec:
    """Record of one sampled scenario, sufficient to reproduce it."""

    kind: ScenarioKind
    seed: int
    index: int = 0
    severity: Severity | None = None
    location_cell: int | None = None
    start_step: int | None = None
    end_step: int | None = None
    modifiers: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "seed": self.seed,
            "index": self.index,
            "severity": self.severity.value if self.severity else None,
            "location_cell": self.location_cell,
            "start_step": self.start_step,
            "end_step": self.end_step,
            "modifiers": [[p, v] for p, v in self.modifiers],
        }


@dataclass
class EnsembleSpec:
    """Scenario counts per family plus the master seed."""

    counts: dict[ScenarioKind, int]
    master_seed: int
    params: SamplerParams = field(default_factory=SamplerParams)

    def total(self) -> int:
        return sum(self.counts.values())


def _mult(rng: np.random.Generator, sigma: float) -> float:
    """Multiplicative noise factor 1 + sigma*N(0,1), floored at zero."""
    return max(0.0, 1.0 + sigma * rng.standard_normal())


def draw_severity(rng: np.random.Generator, params: SamplerParams) -> Severity:
    """Sample an incident severity with the configured weights."""
    order = (Severity.MILD, Severity.MODERATE, Severity.SEVERE)
    return order[rng.choice(3, p=np.asarray(params.severity_weights))]


def draw_window(
    rng: np.random.Generator,
    horizon_steps: int,
    dt_h: float,
    duration_range_h: tuple[float, float],
) -> tuple[int, int]:
    """Sample an event window: uniform start step, uniform duration in
    hours rounded to whole steps (at least one), truncated at the
    horizon."""
    start = int(rng.integers(0, horizon_steps))
    duration_h = float(rng.uniform(*duration_range_h))
    steps = max(1, int(round(duration_h / dt_h)))
    return start, min(horizon_steps, start + steps)


def _neighborhood(center: int, radius: int, n: int) -> range:
    return range(max(0, center - radius), min(n, center + radius + 1))


def _jitter_initial_rho(cfg: CorridorConfig, cells, rng, sigma, mods, label):
    for i in cells:
        m = _mult(rng, sigma)
        jam = cfg.cells[i].rho_jam_veh_mi
        cfg.initial_rho_veh_mi[i] = min(jam, cfg.initial_rho_veh_mi[i] * m)
        mods.append((f"{label}initial_rho[{i}]", m))


def sample_nv(
    base: CorridorConfig, seed: int, params: SamplerParams = SamplerParams()
) -> tuple[ScenarioSpec, CorridorConfig]:
    """Corridor-wide multiplicative noise on densities and demands.

    Draw order is fixed: boundary demand, then initial densities by
    cell, then on-ramp demands, then off-ramp splits. Results are
    clamped into valid ranges (densities to jam, splits to 1, ramp
    demands to their capacity caps).
    """
    rng = np.random.default_rng(seed)
    cfg = base.clone()
    mods: list[tuple[str, float]] = []

    m = _mult(rng, params.sigma)
    cfg.boundary_demand_veh_h *= m
    mods.append(("boundary_demand", m))
    _jitter_initial_rho(cfg, range(cfg.n_cells), rng, params.sigma, mods, "")
    for i in range(cfg.n_cells):
        if cfg.cells[i].has_on_ramp:
            m = _mult(rng, params.sigma)
            scaled = cfg.ramps.on_ramp_demand_veh_h[:, i] * m
            cfg.ramps.on_ramp_demand_veh_h[:, i] = np.minimum(
                scaled, cfg.ramps.on_ramp_max_veh_h[:, i]
            )
            mods.append((f"on_ramp_demand[{i}]", m))
    for i in range(cfg.n_cells):
        if cfg.cells[i].has_off_ramp:
            m = _mult(rng, params.sigma)
            cfg.ramps.off_ramp_split[:, i] = np.minimum(
                1.0, cfg.ramps.off_ramp_split[:, i] * m
            )
            mods.append((f"off_ramp_split[{i}]", m))
    spec = ScenarioSpec(kind=ScenarioKind.NV, seed=seed, modifiers=mods)
    return spec, cfg


def sample_cw(
    base: CorridorConfig, seed: int, params: SamplerParams = SamplerParams()
) -> tuple[ScenarioSpec, CorridorConfig]:
    """Construction event: ramp capacities near a sampled cell reduced
    by a sampled factor for the full day, with local jitter."""
    rng = np.random.default_rng(seed)
    cfg = base.clone()
    mods: list[tuple[str, float]] = []
    loc = int(rng.integers(0, cfg.n_cells))
    reduction = float(rng.uniform(*params.cw_reduction_range))
    hood = _neighborhood(loc, params.neighbor_radius, cfg.n_cells)
    for i in hood:
        if cfg.cells[i].has_on_ramp:
            cfg.ramps.on_ramp_max_veh_h[:, i] *= reduction
            mods.append((f"on_ramp_max[{i}]", reduction))
        if cfg.cells[i].has_off_ramp:
            cfg.ramps.off_ramp_max_veh_h[:, i] *= reduction
            mods.append((f"off_ramp_max[{i}]", reduction))
    _jitter_initial_rho(cfg, hood, rng, params.sigma, mods, "")
    for i in hood:
        if cfg.cells[i].has_on_ramp:
            m = _mult(rng, params.sigma)
            scaled = cfg.ramps.on_ramp_demand_veh_h[:, i] * m
            cfg.ramps.on_ramp_demand_veh_h[:, i] = np.minimum(
                scaled, cfg.ramps.on_ramp_max_veh_h[:, i]
            )
            mods.append((f"on_ramp_demand[{i}]", m))
    spec = ScenarioSpec(
        kind=ScenarioKind.CW,
        seed=seed,
        location_cell=loc,
        start_step=0,
        end_step=cfg.horizon_steps,
        modifiers=mods,
    )
    return spec, cfg


def sample_acc_mainline(
    base: CorridorConfig, seed: int, params: SamplerParams = SamplerParams()
) -> tuple[ScenarioSpec, CorridorConfig]:
    """Lane-blocking incident: capacity at the event cell scales with
    the unblocked lane fraction over a sampled window.

    Severity blocks 1/2/3 lanes (mild/moderate/severe), never all of
    them; a full closure is the ``ff`` family's job.
    """
    rng = np.random.default_rng(seed)
    cfg = base.clone()
    mods: list[tuple[str, float]] = []
    severity = draw_severity(rng, params)
    loc = int(rng.integers(0, cfg.n_cells))
    start, end = draw_window(
        rng, cfg.horizon_steps, cfg.dt_h, params.incident_duration_range_h
    )
    lanes = cfg.cells[loc].n_lanes
    blocked = min(BLOCKED_LANES[severity], lanes - 1)
    factor = (lanes - blocked) / lanes
    if cfg.capacity_scale is None:
        cfg.capacity_scale = np.ones((cfg.horizon_steps, cfg.n_cells))
    cfg.capacity_scale[start:end, loc] *= factor
    mods.append((f"capacity_scale[{loc}]", factor))
    hood = _neighborhood(loc, params.neighbor_radius, cfg.n_cells)
    _jitter_initial_rho(cfg, hood, rng, params.sigma, mods, "")
    for i in hood:
        if cfg.cells[i].has_on_ramp:
            m = _mult(rng, params.sigma)
            cfg.ramps.on_ramp_max_veh_h[:, i] *= m
            mods.append((f"on_ramp_max[{i}]", m))
        if cfg.cells[i].has_off_ramp:
            m = _mult(rng, params.sigma)
            cfg.ramps.off_ramp_max_veh_h[:, i] *= m
            mods.append((f"off_ramp_max[{i}]", m))
    spec = ScenarioSpec(
        kind=ScenarioKind.ACC_MAINLINE,
        seed=seed,
        severity=severity,
        location_cell=loc,
        start_step=start,
        end_step=end,
        modifiers=mods,
    )
    return spec, cfg


def sample_acc_ramp(
    base: CorridorConfig, seed: int, params: SamplerParams = SamplerParams()
) -> tuple[ScenarioSpec, CorridorConfig]:
    """One on-ramp closed for a sampled window; outside the window the
    configuration equals the base exactly."""
    rng = np.random.default_rng(seed)
    cfg = base.clone()
    ramp_cells = [i for i, c in enumerate(cfg.cells) if c.has_on_ramp]
    if not ramp_cells:
        raise ConfigError("corridor has no on-ramps to close", "cells")
    loc = int(ramp_cells[rng.integers(0, len(ramp_cells))])
    start, end = draw_window(
        rng, cfg.horizon_steps, cfg.dt_h, params.ramp_closure_duration_range_h
    )
    cfg.ramps.on_ramp_demand_veh_h[start:end, loc] = 0.0
    cfg.ramps.on_ramp_max_veh_h[start:end, loc] = 0.0
    spec = ScenarioSpec(
        kind=ScenarioKind.ACC_RAMP,
        seed=seed,
        location_cell=loc,
        start_step=start,
        end_step=end,
        modifiers=[(f"on_ramp_closed[{loc}]", 0.0)],
    )
    return spec, cfg


def sample_ff(
    base: CorridorConfig, seed: int, params: SamplerParams = SamplerParams()
) -> tuple[ScenarioSpec, CorridorConfig]:
    """Exit closed all day while upstream boundary demand is scaled up;
    traffic accumulates against the closure and jams upstream."""
    cfg = base.clone()
    cfg.boundary_supply_veh_h[:] = 0.0
    cfg.boundary_demand_veh_h *= params.exit_demand_multiplier
    spec = ScenarioSpec(
        kind=ScenarioKind.FF,
        seed=seed,
        start_step=0,
        end_step=cfg.horizon_steps,
        modifiers=[
            ("boundary_supply", 0.0),
            ("boundary_demand", params.exit_demand_multiplier),
        ],
    )
    return spec, cfg


_SAMPLERS = {
    ScenarioKind.NV: sample_nv,
    ScenarioKind.CW: sample_cw,
    ScenarioKind.ACC_MAINLINE: sample_acc_mainline,
    ScenarioKind.ACC_RAMP: sample_acc_ramp,
    ScenarioKind.FF: sample_ff,
}

#: generation order of families within an ensemble
_FAMILY_ORDER = (
    ScenarioKind.NV,
    ScenarioKind.CW,
    ScenarioKind.ACC_MAINLINE,
    ScenarioKind.ACC_RAMP,
    ScenarioKind.FF,
)


def sample_scenario(
    kind: ScenarioKind,
    base: CorridorConfig,
    seed: int,
    params: SamplerParams = SamplerParams(),
) -> tuple[ScenarioSpec, CorridorConfig]:
    return _SAMPLERS[ScenarioKind(kind)](base, seed, params)


def generate_ensemble(
    base: CorridorConfig, spec: EnsembleSpec
) -> list[tuple[ScenarioSpec, CorridorConfig]]:
    """Generate all scenarios of an ensemble.

    Families are generated in a fixed order (nv, cw, acc_mainline,
    acc_ramp, ff); each scenario receives an independent child seed
    derived from the master seed, recorded on its spec.
    """
    for kind, count in spec.counts.items():
        if count < 0:
            raise ConfigError(f"negative count for {kind}", "counts")
    total = spec.total()
    seeds = np.random.SeedSequence(spec.master_seed).generate_state(max(total, 1))
    out: list[tuple[ScenarioSpec, CorridorConfig]] = []
    idx = 0
    for kind in _FAMILY_ORDER:
        for _ in range(spec.counts.get(kind, 0)):
            child_seed = int(seeds[idx])
            s, cfg = _SAMPLERS[kind](base, child_seed, spec.params)
            s.index = idx
            out.append((s, cfg))
            idx += 1
    return out
