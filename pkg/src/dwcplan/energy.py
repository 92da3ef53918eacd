"""Vehicle power model and trajectory-to-demand conversion.

Converts simulated traffic into the electrical load that in-road
wireless charging coils draw from the distribution grid. A charging
vehicle moving at speed ``v`` (m/s) draws

    p_drive = (0.5 * c_d * A * rho_air * v^3 + c_rr * m * g * v) / eta

covering aerodynamic drag and rolling resistance through the drivetrain
efficiency, plus a constant auxiliary load. On top of that, each
vehicle banks a battery recharge of ``soc_per_mile * battery_kwh`` per
mile of coil-equipped roadway it occupies in a timestep, independent of
speed.

Cell energy per timestep scales linearly with the number of charging
vehicles in the cell, ``hev_density * cell_length``; charging vehicles
are the heavy-truck share of traffic in the rightmost (coil-equipped)
lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corridor import CorridorTrajectory
from .errors import ConfigError

__all__ = [
    "MPH_TO_MPS",
    "VehicleParams",
    "FleetScaling",
    "DemandProfile",
    "drive_power",
    "vehicle_energy",
    "cell_coil_energy",
    "hev_density",
    "build_demand_profile",
]

MPH_TO_MPS = 0.44704


@dataclass(frozen=True)
class VehicleParams:
    """Electrified heavy-truck parameters.

    Defaults describe a 30.5 t class-8 tractor-trailer with a 311 kWh
    battery charging while driving.
    """

    drivetrain_efficiency: float = 0.92
    drag_coefficient: float = 0.65
    frontal_area_m2: float = 10.2
    air_density_kg_m3: float = 1.225
    mass_kg: float = 30500.0
    gravity_m_s2: float = 9.8
    rolling_resistance: float = 0.0068
    aux_power_kw: float = 7.5
    battery_kwh: float = 311.0
    soc_per_mile: float = 0.0015

    def __post_init__(self):
        if not 0.0 < self.drivetrain_efficiency <= 1.0:
            raise ValueError(
                f"drivetrain_efficiency must be in (0, 1], got {self.drivetrain_efficiency}"
            )
        for name in (
            "drag_coefficient",
            "frontal_area_m2",
            "air_density_kg_m3",
            "mass_kg",
            "gravity_m_s2",
            "rolling_resistance",
            "battery_kwh",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.aux_power_kw < 0 or self.soc_per_mile < 0:
            raise ValueError("aux_power_kw and soc_per_mile must be non-negative")


@dataclass(frozen=True)
class FleetScaling:
    """Fraction of traffic that charges: heavy-truck share of total
    density times the share of trucks in the coil-equipped lane."""

    truck_share: float = 0.12
    charging_lane_share: float = 0.90

    def __post_init__(self):
        for name in ("truck_share", "charging_lane_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    @property
    def charging_fraction(self) -> float:
        return self.truck_share * self.charging_lane_share


def drive_power(speed_mps: float, vehicle: VehicleParams) -> float:
    """Traction power (kW) drawn at constant speed ``speed_mps``."""
    if speed_mps < 0:
        raise ValueError(f"speed must be non-negative, got {speed_mps}")
    aero = (
        0.5
        * vehicle.drag_coefficient
        * vehicle.frontal_area_m2
        * vehicle.air_density_kg_m3
        * speed_mps**3
    )
    roll = (
        vehicle.rolling_resistance
        * vehicle.mass_kg
        * vehicle.gravity_m_s2
        * speed_mps
    )
    return (aero + roll) / vehicle.drivetrain_efficiency / 1000.0


def vehicle_energy(speed_mps: float, vehicle: VehicleParams, dt_h: float) -> float:
    """Energy (kWh) one vehicle draws over a timestep: traction plus
    auxiliary loads, excluding the battery recharge term."""
    if dt_h <= 0:
        raise ValueError(f"dt_h must be positive, got {dt_h}")
    return (drive_power(speed_mps, vehicle) + vehicle.aux_power_kw) * dt_h


def cell_coil_energy(
    hev_density_veh_mi: float,
    speed_mps: float,
    cell_length_mi: float,
    vehicle: VehicleParams,
    dt_h: float,
    soc_per_mile: float | None = None,
) -> float:
    """Coil energy (kWh) one cell delivers during one timestep.

    ``hev_density_veh_mi * cell_length_mi`` charging vehicles each draw
    their drive/aux energy plus a speed-independent battery recharge of
    ``soc_per_mile * cell_length_mi * battery_kwh``.
    """
    if hev_density_veh_mi < 0:
        raise ValueError(f"density must be non-negative, got {hev_density_veh_mi}")
    if cell_length_mi <= 0:
        raise ValueError(f"cell_length_mi must be positive, got {cell_length_mi}")
    soc = vehicle.soc_per_mile if soc_per_mile is None else soc_per_mile
    n_veh = hev_density_veh_mi * cell_length_mi
    per_veh = vehicle_energy(speed_mps, vehicle, dt_h)
    recharge = soc * cell_length_mi * vehicle.battery_kwh
    return per_veh * n_veh + recharge * n_veh


def hev_density(rho_veh_mi: float, fleet: FleetScaling) -> float:
    """Charging-vehicle density (veh/mi) from total traffic density."""
    if rho_veh_mi < 0:
        raise ValueError(f"density must be non-negative, got {rho_veh_mi}")
    return rho_veh_mi * fleet.charging_fraction


@dataclass
class DemandProfile:
    """Bus-level electrical load time series in grid units.

    ``p_mw``/``q_mvar`` are indexed ``[bus, t]`` over all network buses
    (zero rows for buses without roadway cells). ``cell_energy_kwh``
    keeps the cell-resolved energy table behind the bus aggregation when
    the profile came from a trajectory.
    """

    p_mw: np.ndarray
    q_mvar: np.ndarray
    dt_h: float
    power_factor: float
    cell_to_bus: dict[int, int]
    cell_energy_kwh: np.ndarray | None = None

    @property
    def n_buses(self) -> int:
        return self.p_mw.shape[0]

    @property
    def horizon_steps(self) -> int:
        return self.p_mw.shape[1]

    def peak_mw(self) -> float:
        """Peak of the total (system-wide) load."""
        return float(self.p_mw.sum(axis=0).max())

    def total_energy_mwh(self) -> float:
        return float(self.p_mw.sum() * self.dt_h)

    def aggregate(self, factor: int) -> "DemandProfile":
        """Average consecutive blocks of ``factor`` timesteps into one.

        Power is block-averaged so total energy is preserved exactly up
        to roundoff. The horizon must divide evenly.
        """
        t = self.horizon_steps
        if factor < 1 or t % factor != 0:
            raise ValueError(
                f"aggregation factor {factor} does not divide horizon {t}"
            )
        if factor == 1:
            return self
        blocks = t // factor
        p = self.p_mw.reshape(self.n_buses, blocks, factor).mean(axis=2)
        q = self.q_mvar.reshape(self.n_buses, blocks, factor).mean(axis=2)
        return DemandProfile(
            p_mw=p,
            q_mvar=q,
            dt_h=self.dt_h * factor,
            power_factor=self.power_factor,
            cell_to_bus=dict(self.cell_to_bus),
            cell_energy_kwh=None,
        )


def build_demand_profile(
    traj: CorridorTrajectory,
    vehicle: VehicleParams,
    fleet: FleetScaling,
    cell_to_bus: dict[int, int],
    n_buses: int,
    power_factor: float = 0.95,
    soc_per_mile_schedule: np.ndarray | None = None,
) -> DemandProfile:
    """Convert a traffic trajectory into bus-level electrical demand.

    Each timestep's cell energy is evaluated at the densities and
    speeds holding at the start of the step; reactive power follows the
    real power at a constant lagging power factor.

    ``soc_per_mile_schedule`` optionally overrides the constant battery
    recharge rate with one value per timestep.
    """
    if not 0.0 < power_factor <= 1.0:
        raise ConfigError(f"power_factor must be in (0, 1], got {power_factor}")
    n = traj.n_cells
    t_total = traj.horizon_steps
    for i in range(n):
        if i not in cell_to_bus:
            raise ConfigError(f"cell {i} is not mapped to any bus", "cell_to_bus")
    bus_idx = np.array([cell_to_bus[i] for i in range(n)], dtype=int)
    if bus_idx.min() < 0 or bus_idx.max() >= n_buses:
        raise ConfigError(
            f"cell_to_bus targets outside 0..{n_buses - 1}", "cell_to_bus"
        )
    if soc_per_mile_schedule is not None:
        soc_t = np.asarray(soc_per_mile_schedule, dtype=float)
        if soc_t.shape != (t_total,):
            raise ConfigError(
                f"expected shape ({t_total},), got {soc_t.shape}",
                "soc_per_mile_schedule",
            )
    else:
        soc_t = np.full(t_total, vehicle.soc_per_mile)

    dx = np.array([c.length_mi for c in traj.cells])
    rho_hev = traj.rho[:-1] * fleet.charging_fraction
    v_mps = traj.speed[:-1] * MPH_TO_MPS
    p_kw = (
        0.5
        * vehicle.drag_coefficient
        * vehicle.frontal_area_m2
        * vehicle.air_density_kg_m3
        * v_mps**3
        + vehicle.rolling_resistance
        * vehicle.mass_kg
        * vehicle.gravity_m_s2
        * v_mps
    ) / vehicle.drivetrain_efficiency / 1000.0
    per_veh_kwh = (p_kw + vehicle.aux_power_kw) * traj.dt_h
    recharge_kwh = soc_t[:, None] * dx[None, :] * vehicle.battery_kwh
    n_veh = rho_hev * dx[None, :]
    cell_kwh = (per_veh_kwh + recharge_kwh) * n_veh

    p_mw = np.zeros((n_buses, t_total))
    cell_p_mw = cell_kwh.T / traj.dt_h / 1000.0
    for i in range(n):
        p_mw[bus_idx[i]] += cell_p_mw[i]
    q_mvar = p_mw * math.tan(math.acos(power_factor))
    return DemandProfile(
        p_mw=p_mw,
        q_mvar=q_mvar,
        dt_h=traj.dt_h,
        power_factor=power_factor,
        cell_to_bus=dict(cell_to_bus),
        cell_energy_kwh=cell_kwh.T,
    )
