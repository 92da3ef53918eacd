"""Cell-based freeway traffic simulation.

A directed corridor is discretized into cells indexed 0..N-1 in the
direction of travel. Each cell carries a vehicle density (veh/mi) that
evolves in discrete time through flow conservation across cell
interfaces.

Model summary
-------------
Each cell has a triangular flow-density relationship

    Q(rho) = v_ff * rho              for rho <= rho_crit
    Q(rho) = w * (rho_jam - rho)     for rho >  rho_crit

with capacity ``q_cap = v_ff * rho_crit``. The flow across an interface
is the minimum of what the upstream cell can send and what the
downstream cell can accept:

    send(rho)   = Q(rho) if rho <= rho_crit else q_cap
    accept(rho) = q_cap  if rho <= rho_crit else Q(rho)
    q           = min(send(upstream), accept(downstream))

Densities then update by conservation:

    rho_i' = rho_i + (dt / dx_i) * (inflow_i - outflow_i)

Ramps
-----
An off-ramp at cell i diverts a fraction ``beta`` of the cell's total
outflow. The total outflow is limited jointly by the cell's send
function, by the downstream accept capacity applied to the mainline
share, and by the off-ramp capacity applied to the diverted share
(first-in-first-out: mainline and ramp vehicles leave in proportion, so
one blocked exit throttles both). An on-ramp at cell i merges after the
mainline: the mainline inflow claims downstream accept capacity first
and the ramp receives the residual, capped by its own demand and
capacity.

Boundaries
----------
The upstream boundary is a virtual source with a demand time series;
the downstream boundary is a virtual sink with a supply (accept) time
series, unlimited by default. Setting the sink supply to zero models a
full closure at the corridor exit.

Stability
---------
The update is well-posed when no vehicle can cross a full cell in one
step in either wave direction: ``v_ff * dt <= dx`` and ``w * dt <= dx``
for every cell. Under these conditions densities stay within
``[0, rho_jam]`` without clamping (up to floating-point roundoff) and
vehicle mass is conserved exactly.

Time-varying capacity reductions (lane blockages) enter through a
per-timestep scale factor on ``rho_crit`` and ``rho_jam``; when the
scale drops while a cell is loaded, the density may transiently exceed
the reduced jam density, in which case the cell accepts nothing and
drains at capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "CellParams",
    "RampSchedule",
    "CorridorConfig",
    "CorridorState",
    "CorridorTrajectory",
    "fundamental_flow",
    "cell_demand",
    "cell_supply",
    "interface_flow",
    "step",
    "simulate",
    "vehicle_balance",
]


@dataclass(frozen=True)
class CellParams:
    """Static parameters of one corridor cell.

    Parameters
    ----------
    length_mi : float
        Cell length in miles.
    v_ff_mph : float
        Free-flow speed in mph.
    w_mph : float
        Congestion-wave speed in mph (speed at which gaps propagate
        upstream in congested conditions).
    rho_crit_veh_mi : float
        Critical density in veh/mi; the density at which the cell
        reaches capacity.
    rho_jam_veh_mi : float
        Jam density in veh/mi; flow is zero at this density.
    n_lanes : int
        Lane count, used by disruption scenarios to convert blocked
        lanes into capacity scale factors.
    has_on_ramp, has_off_ramp : bool
        Whether ramp flows may attach to this cell.
    """

    length_mi: float
    v_ff_mph: float
    w_mph: float
    rho_crit_veh_mi: float
    rho_jam_veh_mi: float
    n_lanes: int = 1
    has_on_ramp: bool = False
    has_off_ramp: bool = False

    def __post_init__(self):
        if self.length_mi <= 0:
            raise ValueError(f"length_mi must be positive, got {self.length_mi}")
        if self.v_ff_mph <= 0:
            raise ValueError(f"v_ff_mph must be positive, got {self.v_ff_mph}")
        if self.w_mph <= 0:
            raise ValueError(f"w_mph must be positive, got {self.w_mph}")
        if not 0 < self.rho_crit_veh_mi < self.rho_jam_veh_mi:
            raise ValueError(
                "need 0 < rho_crit_veh_mi < rho_jam_veh_mi, got "
                f"{self.rho_crit_veh_mi} and {self.rho_jam_veh_mi}"
            )
        if self.n_lanes < 1:
            raise ValueError(f"n_lanes must be >= 1, got {self.n_lanes}")

    @property
    def q_cap_veh_h(self) -> float:
        """Capacity flow v_ff * rho_crit in veh/h."""
        return self.v_ff_mph * self.rho_crit_veh_mi


def fundamental_flow(rho: float, cell: CellParams) -> float:
    """Flow (veh/h) sustained at density ``rho`` under the cell's
    triangular flow-density relationship.

    Raises
    ------
    ValueError
        If ``rho`` is outside ``[0, rho_jam]``.
    """
    if not 0.0 <= rho <= cell.rho_jam_veh_mi:
        raise ValueError(
            f"density {rho} outside [0, {cell.rho_jam_veh_mi}] for this cell"
        )
    if rho <= cell.rho_crit_veh_mi:
        return cell.v_ff_mph * rho
    return cell.w_mph * (cell.rho_jam_veh_mi - rho)


def cell_demand(rho: float, cell: CellParams) -> float:
    """Sending function: flow the cell offers to its downstream
    interface. Equals ``Q(rho)`` below critical density and saturates
    at capacity above it."""
    if not 0.0 <= rho <= cell.rho_jam_veh_mi:
        raise ValueError(
            f"density {rho} outside [0, {cell.rho_jam_veh_mi}] for this cell"
        )
    if rho <= cell.rho_crit_veh_mi:
        return cell.v_ff_mph * rho
    return cell.q_cap_veh_h


def cell_supply(rho: float, cell: CellParams) -> float:
    """Receiving function: flow the cell can accept from upstream.
    Equals capacity below critical density and ``Q(rho)`` above it."""
    if not 0.0 <= rho <= cell.rho_jam_veh_mi:
        raise ValueError(
            f"density {rho} outside [0, {cell.rho_jam_veh_mi}] for this cell"
        )
    if rho <= cell.rho_crit_veh_mi:
        return cell.q_cap_veh_h
    return cell.w_mph * (cell.rho_jam_veh_mi - rho)


def interface_flow(
    upstream_rho: float,
    downstream_rho: float,
    upstream: CellParams,
    downstream: CellParams,
    off_split: float = 0.0,
    off_ramp_max_veh_h: float = math.inf,
) -> float:
    """Mainline flow (veh/h) across the interface between two cells.

    With ``off_split = 0`` this is ``min(send(up), accept(down))``.
    With an off-ramp active at the upstream cell, a fraction
    ``off_split`` of the upstream cell's total outflow diverts to the
    ramp and the returned value is the mainline share only.
    """
    if not 0.0 <= off_split <= 1.0:
        raise ValueError(f"off_split must be in [0, 1], got {off_split}")
    d = cell_demand(upstream_rho, upstream)
    s = cell_supply(downstream_rho, downstream)
    total = d
    if off_split < 1.0:
        total = min(total, s / (1.0 - off_split))
    if off_split > 0.0:
        total = min(total, off_ramp_max_veh_h / off_split)
    return (1.0 - off_split) * total


@dataclass
class RampSchedule:
    """Time-indexed ramp data, one row per timestep, one column per cell.

    ``on_ramp_demand_veh_h`` and the two capacity arrays are flows in
    veh/h; ``off_ramp_split`` is the fraction of a cell's outflow that
    exits at its off-ramp. Entries must be zero (splits) or unused
    (demands) at cells without the corresponding ramp.
    """

    on_ramp_demand_veh_h: np.ndarray
    off_ramp_split: np.ndarray
    on_ramp_max_veh_h: np.ndarray
    off_ramp_max_veh_h: np.ndarray

    @classmethod
    def empty(cls, horizon_steps: int, n_cells: int) -> "RampSchedule":
        shape = (horizon_steps, n_cells)
        return cls(
            on_ramp_demand_veh_h=np.zeros(shape),
            off_ramp_split=np.zeros(shape),
            on_ramp_max_veh_h=np.full(shape, math.inf),
            off_ramp_max_veh_h=np.full(shape, math.inf),
        )

    def copy(self) -> "RampSchedule":
        return RampSchedule(
            self.on_ramp_demand_veh_h.copy(),
            self.off_ramp_split.copy(),
            self.on_ramp_max_veh_h.copy(),
            self.off_ramp_max_veh_h.copy(),
        )


@dataclass
class CorridorConfig:
    """Everything needed to run one corridor simulation.

    ``capacity_scale`` optionally scales ``rho_crit`` and ``rho_jam``
    per timestep and cell (lane blockages); ``None`` means no scaling.
    ``boundary_supply_veh_h`` may contain ``inf`` for an unconstrained
    exit.
    """

    cells: list[CellParams]
    dt_h: float
    horizon_steps: int
    initial_rho_veh_mi: np.ndarray
    boundary_demand_veh_h: np.ndarray
    boundary_supply_veh_h: np.ndarray
    ramps: RampSchedule
    capacity_scale: np.ndarray | None = None

    def __post_init__(self):
        self.initial_rho_veh_mi = np.asarray(self.initial_rho_veh_mi, dtype=float)
        self.boundary_demand_veh_h = np.asarray(self.boundary_demand_veh_h, dtype=float)
        self.boundary_supply_veh_h = np.asarray(self.boundary_supply_veh_h, dtype=float)
        if self.capacity_scale is not None:
            self.capacity_scale = np.asarray(self.capacity_scale, dtype=float)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def validate(self) -> None:
        """Check stability conditions, array shapes, and value ranges.

        Raises
        ------
        ConfigError
            On the first violation found, with a dotted path to the
            offending field.
        """
        n, t = self.n_cells, self.horizon_steps
        if n == 0:
            raise ConfigError("corridor must have at least one cell", "cells")
        if self.dt_h <= 0:
            raise ConfigError(f"must be positive, got {self.dt_h}", "dt_h")
        if t <= 0:
            raise ConfigError(f"must be positive, got {t}", "horizon_steps")
        tol = 1.0 + 1e-9
        for i, c in enumerate(self.cells):
            if c.v_ff_mph * self.dt_h > c.length_mi * tol:
                raise ConfigError(
                    f"free-flow speed {c.v_ff_mph} mph travels past the "
                    f"{c.length_mi} mi cell in one {self.dt_h} h step; "
                    "shorten the timestep or lengthen the cell",
                    f"cells[{i}]",
                )
            if c.w_mph * self.dt_h > c.length_mi * tol:
                raise ConfigError(
                    f"congestion wave speed {c.w_mph} mph crosses the "
                    f"{c.length_mi} mi cell in one {self.dt_h} h step",
                    f"cells[{i}]",
                )
        if self.initial_rho_veh_mi.shape != (n,):
            raise ConfigError(
                f"expected shape ({n},), got {self.initial_rho_veh_mi.shape}",
                "initial_rho_veh_mi",
            )
        for i, c in enumerate(self.cells):
            r = self.initial_rho_veh_mi[i]
            if not 0.0 <= r <= c.rho_jam_veh_mi:
                raise ConfigError(
                    f"density {r} outside [0, {c.rho_jam_veh_mi}]",
                    f"initial_rho_veh_mi[{i}]",
                )
        for name, arr in (
            ("boundary_demand_veh_h", self.boundary_demand_veh_h),
            ("boundary_supply_veh_h", self.boundary_supply_veh_h),
        ):
            if arr.shape != (t,):
                raise ConfigError(f"expected shape ({t},), got {arr.shape}", name)
            if np.any(arr < 0):
                raise ConfigError("negative flow", name)
        for name, arr in (
            ("on_ramp_demand_veh_h", self.ramps.on_ramp_demand_veh_h),
            ("off_ramp_split", self.ramps.off_ramp_split),
            ("on_ramp_max_veh_h", self.ramps.on_ramp_max_veh_h),
            ("off_ramp_max_veh_h", self.ramps.off_ramp_max_veh_h),
        ):
            if arr.shape != (t, n):
                raise ConfigError(
                    f"expected shape ({t}, {n}), got {arr.shape}", f"ramps.{name}"
                )
            if np.any(arr < 0):
                raise ConfigError("negative entry", f"ramps.{name}")
        if np.any(self.ramps.off_ramp_split > 1.0):
            raise ConfigError("split exceeds 1", "ramps.off_ramp_split")
        on = np.array([c.has_on_ramp for c in self.cells])
        off = np.array([c.has_off_ramp for c in self.cells])
        if np.any(self.ramps.on_ramp_demand_veh_h[:, ~on] != 0.0):
            bad = int(np.argwhere(np.any(self.ramps.on_ramp_demand_veh_h != 0.0, axis=0) & ~on)[0][0])
            raise ConfigError(
                f"cell {bad} has no on-ramp but nonzero ramp demand",
                "ramps.on_ramp_demand_veh_h",
            )
        if np.any(self.ramps.off_ramp_split[:, ~off] != 0.0):
            bad = int(np.argwhere(np.any(self.ramps.off_ramp_split != 0.0, axis=0) & ~off)[0][0])
            raise ConfigError(
                f"cell {bad} has no off-ramp but nonzero split",
                "ramps.off_ramp_split",
            )
        if self.capacity_scale is not None:
            if self.capacity_scale.shape != (t, n):
                raise ConfigError(
                    f"expected shape ({t}, {n}), got {self.capacity_scale.shape}",
                    "capacity_scale",
                )
            if np.any(self.capacity_scale <= 0) or np.any(self.capacity_scale > 1.0):
                raise ConfigError("entries must lie in (0, 1]", "capacity_scale")

    def clone(self) -> "CorridorConfig":
        """Deep copy of all mutable arrays; cell parameter objects are
        immutable and shared."""
        return CorridorConfig(
            cells=list(self.cells),
            dt_h=self.dt_h,
            horizon_steps=self.horizon_steps,
            initial_rho_veh_mi=self.initial_rho_veh_mi.copy(),
            boundary_demand_veh_h=self.boundary_demand_veh_h.copy(),
            boundary_supply_veh_h=self.boundary_supply_veh_h.copy(),
            ramps=self.ramps.copy(),
            capacity_scale=None if self.capacity_scale is None else self.capacity_scale.copy(),
        )


@dataclass
class CorridorState:
    """Snapshot of the corridor at one timestep.

    ``q_veh_h`` has one entry per interface (N+1 including both
    boundaries) and holds the mainline flows realized during the step
    that leaves this state; the terminal state of a trajectory carries
    zeros there. Ramp flow arrays follow the same convention.
    """

    t: int
    rho_veh_mi: np.ndarray
    q_veh_h: np.ndarray
    v_mph: np.ndarray
    on_ramp_flow_veh_h: np.ndarray
    off_ramp_flow_veh_h: np.ndarray


@dataclass
class CorridorTrajectory:
    """Dense simulation output over a full horizon.

    Arrays are indexed ``[t, i]``: ``rho`` and ``speed`` have
    ``horizon_steps + 1`` rows (initial state included), the flow
    arrays have ``horizon_steps`` rows. ``flow`` has N+1 columns, one
    per interface including both boundaries.
    """

    cells: list[CellParams]
    dt_h: float
    rho: np.ndarray
    speed: np.ndarray
    flow: np.ndarray
    on_ramp_flow: np.ndarray
    off_ramp_flow: np.ndarray
    boundary_demand_veh_h: np.ndarray
    boundary_supply_veh_h: np.ndarray

    @property
    def horizon_steps(self) -> int:
        return self.flow.shape[0]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def states(self) -> list[CorridorState]:
        """Materialize the per-step state list (terminal flows zero)."""
        t_total = self.horizon_steps
        n = self.n_cells
        out = []
        for k in range(t_total + 1):
            if k < t_total:
                q = self.flow[k]
                r_on = self.on_ramp_flow[k]
                r_off = self.off_ramp_flow[k]
            else:
                q = np.zeros(n + 1)
                r_on = np.zeros(n)
                r_off = np.zeros(n)
            out.append(
                CorridorState(
                    t=k,
                    rho_veh_mi=self.rho[k],
                    q_veh_h=q,
                    v_mph=self.speed[k],
                    on_ramp_flow_veh_h=r_on,
                    off_ramp_flow_veh_h=r_off,
                )
            )
        return out


def _effective_arrays(
    cells: list[CellParams], scale_row: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell (v_ff, w, rho_crit_eff, rho_jam_eff) with an optional
    capacity scale applied to both densities."""
    v = np.array([c.v_ff_mph for c in cells])
    w = np.array([c.w_mph for c in cells])
    crit = np.array([c.rho_crit_veh_mi for c in cells])
    jam = np.array([c.rho_jam_veh_mi for c in cells])
    if scale_row is not None:
        crit = crit * scale_row
        jam = jam * scale_row
    return v, w, crit, jam


def _demand_supply(
    rho: np.ndarray, v: np.ndarray, w: np.ndarray, crit: np.ndarray, jam: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized send/accept flows; tolerant of densities above the
    (possibly reduced) jam density, where accept clamps to zero."""
    q_cap = v * crit
    free = rho <= crit
    d = np.where(free, v * rho, q_cap)
    s = np.where(free, q_cap, np.maximum(0.0, w * (jam - rho)))
    return np.maximum(0.0, d), s


def _speeds(
    rho: np.ndarray, v: np.ndarray, w: np.ndarray, crit: np.ndarray, jam: np.ndarray
) -> np.ndarray:
    """Space-mean speed Q(rho)/rho; free-flow speed at zero density."""
    congested = rho > crit
    with np.errstate(divide="ignore", invalid="ignore"):
        vc = np.where(rho > 0, w * np.maximum(0.0, jam - rho) / np.where(rho > 0, rho, 1.0), 0.0)
    return np.where(congested, vc, v)


def _flow_map(
    rho: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    crit: np.ndarray,
    jam: np.ndarray,
    on_demand: np.ndarray,
    off_split: np.ndarray,
    on_max: np.ndarray,
    off_max: np.ndarray,
    boundary_demand: float,
    boundary_supply: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One sweep of the interface flow computation.

    Returns (mainline interface flows (N+1,), on-ramp inflows (N,),
    off-ramp outflows (N,)), all in veh/h.
    """
    n = rho.shape[0]
    d, s = _demand_supply(rho, v, w, crit, jam)
    accept = np.empty(n)
    accept[:-1] = s[1:]
    accept[-1] = boundary_supply
    beta = off_split
    # total outflow limited by send, by downstream acceptance of the
    # mainline share, and by off-ramp capacity of the diverted share
    main_room = np.divide(
        accept, 1.0 - beta, out=np.full(n, math.inf), where=beta < 1.0
    )
    off_room = np.divide(off_max, beta, out=np.full(n, math.inf), where=beta > 0.0)
    total = np.minimum(d, np.minimum(main_room, off_room))
    main_out = (1.0 - beta) * total
    off_out = beta * total
    q = np.empty(n + 1)
    q[0] = min(boundary_demand, s[0])
    q[1:] = main_out
    # mainline claims acceptance first; each on-ramp takes the residual
    r_on = np.minimum(
        np.minimum(on_demand, on_max), np.maximum(0.0, s - q[:-1])
    )
    return q, r_on, off_out


def step(
    state: CorridorState,
    ramps: RampSchedule,
    dt_h: float,
    cells: list[CellParams],
    boundary_demand_veh_h: float = 0.0,
    boundary_supply_veh_h: float = math.inf,
    capacity_scale_row: np.ndarray | None = None,
) -> CorridorState:
    """Advance the corridor one timestep.

    Ramp arrays are indexed by ``state.t``. The returned state's flow
    fields are zero; they are filled by the caller once the next
    transition is computed (see ``simulate``).
    """
    t = state.t
    if not 0 <= t < ramps.on_ramp_demand_veh_h.shape[0]:
        raise ValueError(f"state.t={t} outside the ramp schedule horizon")
    v, w, crit, jam = _effective_arrays(cells, capacity_scale_row)
    q, r_on, r_off = _flow_map(
        state.rho_veh_mi,
        v,
        w,
        crit,
        jam,
        ramps.on_ramp_demand_veh_h[t],
        ramps.off_ramp_split[t],
        ramps.on_ramp_max_veh_h[t],
        ramps.off_ramp_max_veh_h[t],
        boundary_demand_veh_h,
        boundary_supply_veh_h,
    )
    dx = np.array([c.length_mi for c in cells])
    # q[i] is cell i's mainline inflow, q[i+1] its mainline outflow.
    rho_next = state.rho_veh_mi + (dt_h / dx) * ((q[:-1] + r_on) - (q[1:] + r_off))
    n = len(cells)
    return CorridorState(
        t=t + 1,
        rho_veh_mi=rho_next,
        q_veh_h=np.zeros(n + 1),
        v_mph=_speeds(rho_next, v, w, crit, jam),
        on_ramp_flow_veh_h=np.zeros(n),
        off_ramp_flow_veh_h=np.zeros(n),
    )


def simulate(config: CorridorConfig) -> CorridorTrajectory:
    """Run the full simulation defined by ``config``.

    Validates the configuration first; see ``CorridorConfig.validate``.
    """
    config.validate()
    cells = config.cells
    n, t_total = config.n_cells, config.horizon_steps
    dt = config.dt_h
    dx = np.array([c.length_mi for c in cells])

    rho = np.empty((t_total + 1, n))
    speed = np.empty((t_total + 1, n))
    flow = np.empty((t_total, n + 1))
    on_flow = np.empty((t_total, n))
    off_flow = np.empty((t_total, n))
    rho[0] = config.initial_rho_veh_mi

    ramps = config.ramps
    v_base, w_base, crit_base, jam_base = _effective_arrays(cells, None)
    for k in range(t_total):
        if config.capacity_scale is None:
            v, w, crit, jam = v_base, w_base, crit_base, jam_base
        else:
            scale_row = config.capacity_scale[k]
            v, w = v_base, w_base
            crit = crit_base * scale_row
            jam = jam_base * scale_row
        if k == 0:
            speed[0] = _speeds(rho[0], v, w, crit, jam)
        q, r_on, r_off = _flow_map(
            rho[k],
            v,
            w,
            crit,
            jam,
            ramps.on_ramp_demand_veh_h[k],
            ramps.off_ramp_split[k],
            ramps.on_ramp_max_veh_h[k],
            ramps.off_ramp_max_veh_h[k],
            config.boundary_demand_veh_h[k],
            config.boundary_supply_veh_h[k],
        )
        flow[k] = q
        on_flow[k] = r_on
        off_flow[k] = r_off
        rho[k + 1] = rho[k] + (dt / dx) * ((q[:-1] + r_on) - (q[1:] + r_off))
        speed[k + 1] = _speeds(rho[k + 1], v, w, crit, jam)

    return CorridorTrajectory(
        cells=list(cells),
        dt_h=dt,
        rho=rho,
        speed=speed,
        flow=flow,
        on_ramp_flow=on_flow,
        off_ramp_flow=off_flow,
        boundary_demand_veh_h=config.boundary_demand_veh_h.copy(),
        boundary_supply_veh_h=config.boundary_supply_veh_h.copy(),
    )


def vehicle_balance(traj: CorridorTrajectory) -> dict[str, float]:
    """Vehicle-mass bookkeeping over a trajectory.

    Returns initial/final vehicle counts, cumulative boundary and ramp
    volumes, and the absolute and relative conservation residuals. The
    relative residual is normalized by total vehicles handled (initial
    plus all inflows).
    """
    dx = np.array([c.length_mi for c in traj.cells])
    dt = traj.dt_h
    initial = float(traj.rho[0] @ dx)
    final = float(traj.rho[-1] @ dx)
    inflow = float((traj.flow[:, 0].sum() + traj.on_ramp_flow.sum()) * dt)
    outflow = float((traj.flow[:, -1].sum() + traj.off_ramp_flow.sum()) * dt)
    residual = final - initial - inflow + outflow
    handled = initial + inflow
    return {
        "initial_veh": initial,
        "final_veh": final,
        "inflow_veh": inflow,
        "outflow_veh": outflow,
        "abs_residual_veh": residual,
        "rel_residual": abs(residual) / handled if handled > 0 else abs(residual),
    }
