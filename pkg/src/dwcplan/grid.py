"""Electrical network data model for radial distribution feeders.

Buses and lines are specified in physical units (ohms per mile, miles,
kV) and converted once into a per-unit ``Network`` with an explicit
tree orientation: every line is stored parent-to-child as seen from the
slack bus, which is where the feeder couples to the bulk grid.

The default conductor parameters correspond to a common ACSR overhead
conductor (0.1679 ohm/mi resistance, 0.432 ohm/mi reactance).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TopologyError

__all__ = [
    "OSPREY_R_OHM_PER_MI",
    "OSPREY_X_OHM_PER_MI",
    "BusKind",
    "BusSpec",
    "LineSpec",
    "ESUnitSpec",
    "GridCosts",
    "Network",
    "build_network",
    "size_ampacity",
    "CaseStudy",
    "default_case_study",
    "congested_case_study",
    "motivating_case",
]

OSPREY_R_OHM_PER_MI = 0.1679
OSPREY_X_OHM_PER_MI = 0.432

_BUS_KINDS = ("slack", "junction", "roadway")


class BusKind:
    SLACK = "slack"
    JUNCTION = "junction"
    ROADWAY = "roadway"


@dataclass(frozen=True)
class BusSpec:
    """One bus of the feeder.

    ``mapped_cells`` lists the corridor cells whose coil load lands on
    this bus; voltage bounds are plain (not squared) per-unit values.
    """

    id: int
    kind: str
    mapped_cells: tuple[int, ...] = ()
    v_min_pu: float = 0.95
    v_max_pu: float = 1.05
    has_solar: bool = False

    def __post_init__(self):
        if self.kind not in _BUS_KINDS:
            raise ConfigError(
                f"unknown bus kind {self.kind!r}, expected one of {_BUS_KINDS}",
                f"buses[{self.id}].kind",
            )
        if not 0.0 < self.v_min_pu < self.v_max_pu:
            raise ConfigError(
                f"need 0 < v_min < v_max, got {self.v_min_pu}, {self.v_max_pu}",
                f"buses[{self.id}]",
            )


@dataclass(frozen=True)
class LineSpec:
    """One line in physical units; ``ampacity_pu2`` caps the squared
    per-unit current magnitude."""

    from_bus: int
    to_bus: int
    length_mi: float
    r_ohm_per_mi: float = OSPREY_R_OHM_PER_MI
    x_ohm_per_mi: float = OSPREY_X_OHM_PER_MI
    ampacity_pu2: float = 1.0

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise TopologyError(f"line connects bus {self.from_bus} to itself")
        if self.length_mi < 0:
            raise ConfigError(f"negative length {self.length_mi}", "lines")
        if self.r_ohm_per_mi < 0 or self.x_ohm_per_mi < 0:
            raise ConfigError("negative impedance", "lines")
        if self.ampacity_pu2 <= 0:
            raise ConfigError("ampacity_pu2 must be positive", "lines")


@dataclass(frozen=True)
class ESUnitSpec:
    """One energy-storage unit (containerized battery)."""

    energy_mwh: float = 3.9
    p_charge_mw: float = 0.975
    p_discharge_mw: float = 0.975
    q_mvar: float = 0.4875
    eta_charge: float = 0.95
    eta_discharge: float = 0.95

    def __post_init__(self):
        if self.energy_mwh <= 0 or self.p_charge_mw <= 0 or self.p_discharge_mw <= 0:
            raise ValueError("energy and power ratings must be positive")
        if self.q_mvar < 0:
            raise ValueError("q_mvar must be non-negative")
        for name in ("eta_charge", "eta_discharge"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True)
class GridCosts:
    """Electricity prices and capital costs.

    Import energy is priced ``lin * E + quad * E^2`` per step with E in
    MWh; ``per_step_coeffs`` converts to power-based per-step
    coefficients for a given step length. ``planning_periods`` is the
    number of operational periods (days) the planner amortizes capital
    against.
    """

    energy_usd_per_mwh: float = 40.0
    energy_usd_per_mwh2: float = 0.002
    fixed_usd_per_step: float = 0.0
    cycling_usd_per_mw: float = 1.0
    solar_usd_per_mw: float = 1.17e6
    battery_usd_per_unit: float = 1.2e6
    coupling_usd_per_mw: float = 1.8e6
    planning_periods: float = 7300.0

    def __post_init__(self):
        if self.planning_periods <= 0:
            raise ValueError("planning_periods must be positive")
        if self.cycling_usd_per_mw < 0:
            raise ValueError("cycling_usd_per_mw must be non-negative")

    def per_step_coeffs(self, dt_h: float) -> tuple[float, float, float]:
        """(quadratic $/MW^2, linear $/MW, fixed $) per timestep of
        length ``dt_h``: cost(P) = a*P^2 + b*P + c."""
        return (
            self.energy_usd_per_mwh2 * dt_h * dt_h,
            self.energy_usd_per_mwh * dt_h,
            self.fixed_usd_per_step,
        )


@dataclass
class Network:
    """Per-unit radial network rooted at the slack bus.

    Line arrays are aligned and oriented parent-to-child. ``parent[b]``
    is -1 for the slack bus. ``line_of_child[b]`` gives the index of
    the line feeding bus ``b`` (-1 for the slack).
    """

    buses: list[BusSpec]
    base_mva: float
    base_kv: float
    slack_bus: int
    line_from: np.ndarray
    line_to: np.ndarray
    r_pu: np.ndarray
    x_pu: np.ndarray
    ampacity_pu2: np.ndarray
    line_length_mi: np.ndarray
    parent: np.ndarray
    line_of_child: np.ndarray
    bfs_order: np.ndarray
    degenerate_lines: list[int] = field(default_factory=list)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.line_from)

    @property
    def solar_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.has_solar]

    @property
    def v_min2(self) -> np.ndarray:
        return np.array([b.v_min_pu**2 for b in self.buses])

    @property
    def v_max2(self) -> np.ndarray:
        return np.array([b.v_max_pu**2 for b in self.buses])

    def cell_to_bus(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for b in self.buses:
            for c in b.mapped_cells:
                if c in out:
                    raise ConfigError(
                        f"cell {c} mapped to both bus {out[c]} and bus {b.id}",
                        "buses",
                    )
                out[c] = b.id
        return out


def build_network(
    buses: list[BusSpec],
    lines: list[LineSpec],
    base_mva: float = 100.0,
    base_kv: float = 12.47,
) -> Network:
    """Convert bus/line specs into an oriented per-unit network.

    Checks that bus ids are 0..n-1, exactly one bus is the slack, and
    the lines form a single tree reaching every bus. Zero-impedance
    lines are allowed but flagged as degenerate (no loss, no voltage
    drop; their current variable is physically inert).
    """
    if base_mva <= 0 or base_kv <= 0:
        raise ConfigError(f"bases must be positive, got {base_mva} MVA, {base_kv} kV")
    n = len(buses)
    if n == 0:
        raise ConfigError("network has no buses", "buses")
    ids = sorted(b.id for b in buses)
    if ids != list(range(n)):
        raise ConfigError(f"bus ids must be exactly 0..{n - 1}, got {ids}", "buses")
    buses = sorted(buses, key=lambda b: b.id)
    slacks = [b.id for b in buses if b.kind == BusKind.SLACK]
    if len(slacks) != 1:
        raise TopologyError(f"need exactly one slack bus, found {len(slacks)}")
    slack = slacks[0]
    if len(lines) != n - 1:
        raise TopologyError(
            f"a radial feeder over {n} buses needs {n - 1} lines, got {len(lines)}"
        )
    adj: dict[int, list[tuple[int, int]]] = {b.id: [] for b in buses}
    for k, ln in enumerate(lines):
        for end in (ln.from_bus, ln.to_bus):
            if not 0 <= end < n:
                raise TopologyError(f"line {k} references unknown bus {end}")
        adj[ln.from_bus].append((ln.to_bus, k))
        adj[ln.to_bus].append((ln.from_bus, k))

    parent = np.full(n, -1, dtype=int)
    line_of_child = np.full(n, -1, dtype=int)
    seen = {slack}
    order = [slack]
    queue = [slack]
    while queue:
        u = queue.pop(0)
        for v, k in adj[u]:
            if v in seen:
                continue
            seen.add(v)
            parent[v] = u
            line_of_child[v] = k
            order.append(v)
            queue.append(v)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise TopologyError(f"buses {missing} are not connected to the slack bus")

    z_base = base_kv * base_kv / base_mva
    line_from = np.empty(n - 1, dtype=int)
    line_to = np.empty(n - 1, dtype=int)
    r_pu = np.empty(n - 1)
    x_pu = np.empty(n - 1)
    amp = np.empty(n - 1)
    length = np.empty(n - 1)
    degenerate = []
    # reindex lines in bfs child order so line k feeds order[k + 1]
    for new_idx, child in enumerate(order[1:]):
        k = line_of_child[child]
        ln = lines[k]
        line_from[new_idx] = parent[child]
        line_to[new_idx] = child
        r = ln.r_ohm_per_mi * ln.length_mi / z_base
        x = ln.x_ohm_per_mi * ln.length_mi / z_base
        r_pu[new_idx] = r
        x_pu[new_idx] = x
        amp[new_idx] = ln.ampacity_pu2
        length[new_idx] = ln.length_mi
        if r == 0.0 and x == 0.0:
            degenerate.append(new_idx)
        line_of_child[child] = new_idx
    if degenerate:
        warnings.warn(
            f"lines {degenerate} have zero impedance; their current "
            "variables are unconstrained by physics",
            stacklevel=2,
        )
    return Network(
        buses=list(buses),
        base_mva=base_mva,
        base_kv=base_kv,
        slack_bus=slack,
        line_from=line_from,
        line_to=line_to,
        r_pu=r_pu,
        x_pu=x_pu,
        ampacity_pu2=amp,
        line_length_mi=length,
        parent=parent,
        line_of_child=line_of_child,
        bfs_order=np.array(order, dtype=int),
        degenerate_lines=degenerate,
    )


def size_ampacity(network: Network, demand, utilization: float = 0.6) -> np.ndarray:
    """Heuristic per-line ampacity: peak downstream apparent power at
    nominal voltage, divided by the target utilization.

    Ignores losses and local generation; intended as a starting point
    for configs, not a rating study. Returns squared per-unit current
    limits aligned with ``network`` line order.
    """
    if not 0.0 < utilization <= 1.0:
        raise ValueError(f"utilization must be in (0, 1], got {utilization}")
    n = network.n_buses
    p = np.asarray(demand.p_mw) / network.base_mva
    q = np.asarray(demand.q_mvar) / network.base_mva
    down_p = p.copy()
    down_q = q.copy()
    # accumulate leaf-to-root so each bus carries its subtree's load
    for b in network.bfs_order[::-1]:
        pa = network.parent[b]
        if pa >= 0:
            down_p[pa] += down_p[b]
            down_q[pa] += down_q[b]
    amp = np.empty(network.n_lines)
    for k in range(network.n_lines):
        child = network.line_to[k]
        s2 = down_p[child] ** 2 + down_q[child] ** 2
        amp[k] = float(s2.max()) / utilization
    return amp


# ---------------------------------------------------------------------------
# Bundled cases


@dataclass
class CaseStudy:
    """A complete planning case: corridor, feeder, conversion
    parameters, prices and solar availability."""

    corridor: "object"
    network: Network
    es_unit: ESUnitSpec
    costs: GridCosts
    vehicle: "object"
    fleet: "object"
    power_factor: float
    solar_availability: np.ndarray
    solar_q_fraction: float = 0.3
    grid_q_fraction: float = 0.6

    def cell_to_bus(self) -> dict[int, int]:
        return self.network.cell_to_bus()


def default_case_study() -> CaseStudy:
    """Load the bundled corridor-plus-feeder case study.

    A 12-bus 34.5 kV radial feeder: the slack bus hosts the grid
    coupling and the solar plant, one junction bus splits the feeder
    into two branches of five roadway buses, and each roadway bus
    serves four cells of a 40-cell freeway corridor with a two-peak
    weekday demand pattern.
    """
    from .config import load_bundled_case_study

    return load_bundled_case_study("baseline")


def congested_case_study() -> CaseStudy:
    """The bundled case with an evening capacity incident that drives
    the corridor into congestion (densities crossing critical)."""
    from .config import load_bundled_case_study

    return load_bundled_case_study("congested")


def motivating_case() -> tuple[Network, "object", "object", GridCosts]:
    """Small 3-bus illustration: a slack bus feeding two load buses
    over lossless lines, hourly resolution.

    Returns (network, flat_profile, shaped_profile, costs). Both
    profiles carry 20 MW peak system load; the flat one holds it all
    day, the shaped one follows a two-peak day with the same peak.
    """
    from .energy import DemandProfile

    buses = [
        BusSpec(0, BusKind.SLACK),
        BusSpec(1, BusKind.ROADWAY),
        BusSpec(2, BusKind.ROADWAY),
    ]
    lines = [
        LineSpec(0, 1, length_mi=1.0, r_ohm_per_mi=0.0, x_ohm_per_mi=0.0, ampacity_pu2=1e3),
        LineSpec(0, 2, length_mi=1.0, r_ohm_per_mi=0.0, x_ohm_per_mi=0.0, ampacity_pu2=1e3),
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        net = build_network(buses, lines, base_mva=100.0, base_kv=12.47)

    total = np.array(
        [10, 9, 9, 9, 10, 12, 14, 17, 19, 18, 19, 20,
         20, 19, 18, 18, 19, 19, 18, 17, 16, 14, 12, 11],
        dtype=float,
    )
    # morning-heavy at bus 1, evening-heavy at bus 2
    share1 = np.where(np.arange(24) <= 10, 0.6, np.where(np.arange(24) <= 12, 0.5, 0.4))
    shaped_p = np.zeros((3, 24))
    shaped_p[1] = share1 * total
    shaped_p[2] = (1.0 - share1) * total
    flat_p = np.zeros((3, 24))
    flat_p[1] = 10.0
    flat_p[2] = 10.0
    pf = 0.95
    ratio = math.tan(math.acos(pf))
    flat = DemandProfile(
        p_mw=flat_p, q_mvar=flat_p * ratio, dt_h=1.0, power_factor=pf, cell_to_bus={}
    )
    shaped = DemandProfile(
        p_mw=shaped_p, q_mvar=shaped_p * ratio, dt_h=1.0, power_factor=pf, cell_to_bus={}
    )
    costs = GridCosts(
        energy_usd_per_mwh=40.0,
        energy_usd_per_mwh2=0.002,
        cycling_usd_per_mw=0.0,
        solar_usd_per_mw=0.0,
        battery_usd_per_unit=0.0,
        coupling_usd_per_mw=0.0,
        planning_periods=1.0,
    )
    return net, flat, shaped, costs
