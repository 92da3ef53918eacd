"""Multi-period optimal power flow on radial feeders.

Uses the branch-flow formulation in squared variables: per line
(parent i, child j) and timestep, ``P``/``Q`` are the sending-end
flows, ``l`` the squared current magnitude, and per bus ``v`` the
squared voltage magnitude. The physical relations are

    v_j = v_i - 2 (r P + x Q) + (r^2 + x^2) l
    l   = (P^2 + Q^2) / v_i

and losses ``r l`` / ``x l`` are charged where the line lands. The
quadratic equality is relaxed to the rotated-cone inequality
``P^2 + Q^2 <= l * v_i``, written as the second-order cone

    || (2P, 2Q, l - v_i) ||_2  <=  l + v_i

which is exact (gap ~ solver tolerance) on radial feeders whenever
increasing import is never profitable; the cone-gap report measures
``l * v_i - (P^2 + Q^2)`` so that looseness is visible instead of
silent. Lines with zero impedance carry no loss and no drop, so their
current variable is physically inert and excluded from the tightness
report.

Devices: one grid coupling at the slack bus (import only, quadratic
cost), optional solar plants whose output is availability times
capacity (capacity may be a decision variable; output is forced, not
curtailable, unless ``curtailable_solar`` is set), and optional
storage fleets whose power/energy limits scale with a unit count
(also optionally a decision variable). Storage follows

    E[t+1] = E[t] + dt * (eta_ch * P_ch - P_dis / eta_dis)

with a periodic boundary ``E[0] = E[end]`` and a cycling penalty on
``P_ch + P_dis`` that keeps simultaneous charge/discharge out of
optimal solutions.

All network quantities are per-unit internally; solutions are reported
in MW / MVAr / MWh (voltages and currents stay squared per-unit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .energy import DemandProfile
from .errors import AssemblyError, ConfigError, InfeasibleError, SolverError
from .grid import ESUnitSpec, Network

__all__ = [
    "SolverOptions",
    "OperationalProblem",
    "AssembledModel",
    "OperationalSolution",
    "assemble",
    "solve",
    "cone_exactness_report",
]


@dataclass
class SolverOptions:
    """Conic solver selection; ``extra`` is passed through verbatim."""

    solver: str = "CLARABEL"
    verbose: bool = False
    extra: dict = field(default_factory=dict)


@dataclass
class OperationalProblem:
    """One multi-period dispatch problem on a fixed network.

    ``solar_capacity_mw`` / ``es_units`` map bus id to a fixed size or
    to ``None`` for a decision variable (used by the planning layer).
    ``cost_lin_per_step`` may be a scalar or one value per timestep.
    """

    network: Network
    demand: DemandProfile
    es_unit: ESUnitSpec
    solar_availability: np.ndarray
    solar_capacity_mw: dict[int, float | None] = field(default_factory=dict)
    es_units: dict[int, float | None] = field(default_factory=dict)
    cost_quad_per_step: float = 0.0
    cost_lin_per_step: float | np.ndarray = 0.0
    cost_fixed_per_step: float = 0.0
    cycling_usd_per_mw: float = 1.0
    coupling_limit_mw: float | None = None
    grid_q_fraction: float = 0.6
    solar_q_fraction: float = 0.3
    curtailable_solar: bool = False
    fix_slack_voltage: bool = True

    @property
    def horizon_steps(self) -> int:
        return self.demand.horizon_steps

    @property
    def dt_h(self) -> float:
        return self.demand.dt_h

    def validate(self) -> None:
        net = self.network
        t = self.horizon_steps
        if self.demand.n_buses != net.n_buses:
            raise ConfigError(
                f"demand has {self.demand.n_buses} buses, network has {net.n_buses}",
                "demand",
            )
        gamma = np.asarray(self.solar_availability, dtype=float)
        if gamma.shape != (t,):
            raise ConfigError(
                f"expected shape ({t},), got {gamma.shape}", "solar_availability"
            )
        if np.any(gamma < 0) or np.any(gamma > 1.0 + 1e-9):
            raise ConfigError("entries must lie in [0, 1]", "solar_availability")
        for b in self.solar_capacity_mw:
            if not 0 <= b < net.n_buses:
                raise ConfigError(f"unknown bus {b}", "solar_capacity_mw")
            cap = self.solar_capacity_mw[b]
            if cap is not None and cap < 0:
                raise ConfigError(f"negative capacity at bus {b}", "solar_capacity_mw")
        for b in self.es_units:
            if not 0 <= b < net.n_buses:
                raise ConfigError(f"unknown bus {b}", "es_units")
            n = self.es_units[b]
            if n is not None and n < 0:
                raise ConfigError(f"negative unit count at bus {b}", "es_units")
        if self.coupling_limit_mw is not None and self.coupling_limit_mw < 0:
            raise ConfigError("coupling_limit_mw must be non-negative")
        lin = np.asarray(self.cost_lin_per_step, dtype=float)
        if lin.ndim not in (0, 1) or (lin.ndim == 1 and lin.shape != (t,)):
            raise ConfigError(
                "cost_lin_per_step must be scalar or one value per timestep"
            )


@dataclass
class AssembledModel:
    """A compiled conic model plus handles for the planning layer.

    ``constraints`` is the flat list backing ``cp_problem``;
    ``families`` groups the same constraints by name for reporting.
    ``solar_cap_pu`` / ``es_count`` hold either floats (fixed) or
    cvxpy variables (decisions); the planning layer builds its own
    objective on top of ``op_objective`` and these handles.
    """

    problem: OperationalProblem
    cp_problem: cp.Problem
    op_objective: cp.Expression
    constraints: list
    families: dict[str, list]
    p_import: cp.Variable
    q_import: cp.Variable
    v_sq: cp.Variable
    p_flow: cp.Variable | None
    q_flow: cp.Variable | None
    l_sq: cp.Variable | None
    solar_buses: list[int]
    solar_cap_pu: list
    solar_out: list
    solar_q: cp.Variable | None
    es_buses: list[int]
    es_count: list
    p_charge: cp.Variable | None
    p_discharge: cp.Variable | None
    q_storage: cp.Variable | None
    soc: cp.Variable | None
    demand_param_p: cp.Parameter | None = None
    demand_param_q: cp.Parameter | None = None

    def solve(self, opts: SolverOptions | None = None) -> "OperationalSolution":
        return _solve_model(self, self.cp_problem, opts)

    def set_demand(self, demand: DemandProfile) -> None:
        """Swap the load profile on a demand-parameterized model."""
        if self.demand_param_p is None:
            raise AssemblyError(
                "model was assembled without parameterize_demand=True"
            )
        if demand.n_buses != self.problem.network.n_buses or (
            demand.horizon_steps != self.problem.horizon_steps
        ):
            raise ConfigError("replacement demand shape does not match the model")
        base = self.problem.network.base_mva
        self.demand_param_p.value = demand.p_mw.T / base
        self.demand_param_q.value = demand.q_mvar.T / base
        self.problem.demand = demand


def _lin_cost_vector(problem: OperationalProblem) -> np.ndarray:
    lin = np.asarray(problem.cost_lin_per_step, dtype=float)
    if lin.ndim == 0:
        lin = np.full(problem.horizon_steps, float(lin))
    return lin


def assemble(
    problem: OperationalProblem, parameterize_demand: bool = False
) -> AssembledModel:
    """Build the conic model for ``problem``.

    With ``parameterize_demand`` the load enters as cvxpy parameters so
    one compiled model can be re-solved across demand profiles.
    """
    problem.validate()
    net = problem.network
    t = problem.horizon_steps
    nb, nl = net.n_buses, net.n_lines
    base = net.base_mva
    dt = problem.dt_h
    gamma = np.asarray(problem.solar_availability, dtype=float)

    families: dict[str, list] = {}

    def fam(name: str, *cons):
        families.setdefault(name, []).extend(cons)
        return cons

    if parameterize_demand:
        p_load = cp.Parameter((t, nb), name="p_load_pu")
        q_load = cp.Parameter((t, nb), name="q_load_pu")
        p_load.value = problem.demand.p_mw.T / base
        q_load.value = problem.demand.q_mvar.T / base
        demand_p, demand_q = p_load, q_load
    else:
        p_load = problem.demand.p_mw.T / base
        q_load = problem.demand.q_mvar.T / base
        demand_p = demand_q = None

    p_import = cp.Variable(t, name="p_import", nonneg=True)
    q_import = cp.Variable(t, name="q_import")
    v_sq = cp.Variable((t, nb), name="v_sq")

    def col(bus: int) -> np.ndarray:
        e = np.zeros(nb)
        e[bus] = 1.0
        return e

    inj_p: list = [cp.outer(p_import, col(net.slack_bus))]
    inj_q: list = [cp.outer(q_import, col(net.slack_bus))]

    # solar plants: output = availability * capacity unless curtailable
    solar_buses = sorted(problem.solar_capacity_mw)
    ns = len(solar_buses)
    solar_cap_pu: list = []
    solar_out: list = []
    solar_q = cp.Variable((t, ns), name="solar_q") if ns else None
    for ss, b in enumerate(solar_buses):
        fixed = problem.solar_capacity_mw[b]
        if fixed is None:
            cap = cp.Variable(name=f"solar_cap[{b}]", nonneg=True)
        else:
            cap = float(fixed) / base
        solar_cap_pu.append(cap)
        if problem.curtailable_solar:
            out = cp.Variable(t, name=f"solar_out[{b}]", nonneg=True)
            fam("solar", *(out <= gamma * cap,))
        else:
            out = gamma * cap
        solar_out.append(out)
        inj_p.append(cp.outer(out, col(b)))
        inj_q.append(cp.outer(solar_q[:, ss], col(b)))
        fam(
            "solar",
            solar_q[:, ss] <= problem.solar_q_fraction * cap,
            solar_q[:, ss] >= -problem.solar_q_fraction * cap,
        )

    # storage fleets: limits scale with the unit count
    es_buses = sorted(problem.es_units)
    ne = len(es_buses)
    es_count: list = []
    if ne:
        p_charge = cp.Variable((t, ne), name="p_charge", nonneg=True)
        p_discharge = cp.Variable((t, ne), name="p_discharge", nonneg=True)
        q_storage = cp.Variable((t, ne), name="q_storage")
        soc = cp.Variable((t + 1, ne), name="soc", nonneg=True)
    else:
        p_charge = p_discharge = q_storage = soc = None
    spec = problem.es_unit
    for jj, b in enumerate(es_buses):
        fixed = problem.es_units[b]
        if fixed is None:
            count = cp.Variable(name=f"es_count[{b}]", nonneg=True)
        else:
            count = float(fixed)
        es_count.append(count)
        fam(
            "storage_power",
            p_charge[:, jj] <= (spec.p_charge_mw / base) * count,
            p_discharge[:, jj] <= (spec.p_discharge_mw / base) * count,
            q_storage[:, jj] <= (spec.q_mvar / base) * count,
            q_storage[:, jj] >= -(spec.q_mvar / base) * count,
        )
        fam("storage_energy", soc[:, jj] <= (spec.energy_mwh / base) * count)
        inj_p.append(cp.outer(p_discharge[:, jj] - p_charge[:, jj], col(b)))
        inj_q.append(cp.outer(q_storage[:, jj], col(b)))
    if ne:
        fam(
            "storage_energy",
            soc[1:] == soc[:-1]
            + dt * (spec.eta_charge * p_charge - p_discharge / spec.eta_discharge),
        )
        fam("storage_periodicity", soc[0] == soc[t])

    load_inj_p = -demand_p if parameterize_demand else -p_load
    load_inj_q = -demand_q if parameterize_demand else -q_load
    injection_p = sum(inj_p) + load_inj_p
    injection_q = sum(inj_q) + load_inj_q

    if nl:
        p_flow = cp.Variable((t, nl), name="p_flow")
        q_flow = cp.Variable((t, nl), name="q_flow")
        l_sq = cp.Variable((t, nl), name="l_sq", nonneg=True)
        m_from = np.zeros((nl, nb))
        m_to = np.zeros((nl, nb))
        for k in range(nl):
            m_from[k, net.line_from[k]] = 1.0
            m_to[k, net.line_to[k]] = 1.0
        out_p = p_flow @ m_from
        out_q = q_flow @ m_from
        in_p = (p_flow - cp.multiply(l_sq, net.r_pu[None, :])) @ m_to
        in_q = (q_flow - cp.multiply(l_sq, net.x_pu[None, :])) @ m_to
        fam("real_balance", out_p - in_p == injection_p)
        fam("reactive_balance", out_q - in_q == injection_q)

        v_from = v_sq[:, net.line_from.tolist()]
        v_to = v_sq[:, net.line_to.tolist()]
        z2 = net.r_pu**2 + net.x_pu**2
        fam(
            "voltage_drop",
            v_to
            == v_from
            - 2 * (cp.multiply(p_flow, net.r_pu[None, :]) + cp.multiply(q_flow, net.x_pu[None, :]))
            + cp.multiply(l_sq, z2[None, :]),
        )
        for k in range(nl):
            fam(
                "cone",
                cp.SOC(
                    l_sq[:, k] + v_sq[:, net.line_from[k]],
                    cp.vstack(
                        [
                            2 * p_flow[:, k],
                            2 * q_flow[:, k],
                            l_sq[:, k] - v_sq[:, net.line_from[k]],
                        ]
                    ),
                    axis=0,
                ),
            )
        fam("ampacity", l_sq <= net.ampacity_pu2[None, :])
    else:
        p_flow = q_flow = l_sq = None
        fam("real_balance", injection_p == 0)
        fam("reactive_balance", injection_q == 0)

    fam("voltage_bounds", v_sq >= net.v_min2[None, :], v_sq <= net.v_max2[None, :])
    if problem.fix_slack_voltage:
        fam("voltage_bounds", v_sq[:, net.slack_bus] == 1.0)

    if problem.coupling_limit_mw is not None:
        cap_pu = problem.coupling_limit_mw / base
        fam(
            "grid_limits",
            p_import <= cap_pu,
            q_import <= problem.grid_q_fraction * cap_pu,
            q_import >= -problem.grid_q_fraction * cap_pu,
        )

    lin = _lin_cost_vector(problem)
    op_objective = (
        problem.cost_quad_per_step * base * base * cp.sum_squares(p_import)
        + (lin * base) @ p_import
        + problem.cost_fixed_per_step * t
    )
    if ne:
        op_objective = op_objective + problem.cycling_usd_per_mw * base * (
            cp.sum(p_charge) + cp.sum(p_discharge)
        )

    constraints = [c for group in families.values() for c in group]
    try:
        cp_problem = cp.Problem(cp.Minimize(op_objective), constraints)
    except Exception as exc:  # pragma: no cover - cvxpy rejects malformed models
        raise AssemblyError(f"could not assemble conic model: {exc}") from exc

    return AssembledModel(
        problem=problem,
        cp_problem=cp_problem,
        op_objective=op_objective,
        constraints=constraints,
        families=families,
        p_import=p_import,
        q_import=q_import,
        v_sq=v_sq,
        p_flow=p_flow,
        q_flow=q_flow,
        l_sq=l_sq,
        solar_buses=solar_buses,
        solar_cap_pu=solar_cap_pu,
        solar_out=solar_out,
        solar_q=solar_q,
        es_buses=es_buses,
        es_count=es_count,
        p_charge=p_charge,
        p_discharge=p_discharge,
        q_storage=q_storage,
        soc=soc,
        demand_param_p=demand_p,
        demand_param_q=demand_q,
    )


@dataclass
class OperationalSolution:
    """Solved dispatch in engineering units.

    Array layout: time runs along the last axis; ``soc_mwh`` has one
    extra column (initial state). ``cone_gap_pu2`` is
    ``l * v_from - (P^2 + Q^2)`` per line and step;
    ``max_cone_gap_pu2`` excludes zero-impedance lines.
    """

    status: str
    objective_usd: float
    dt_h: float
    base_mva: float
    p_import_mw: np.ndarray
    q_import_mvar: np.ndarray
    v_pu2: np.ndarray
    p_flow_mw: np.ndarray
    q_flow_mvar: np.ndarray
    l_pu2: np.ndarray
    solar_buses: list[int]
    solar_capacity_mw: dict[int, float]
    solar_output_mw: np.ndarray
    solar_q_mvar: np.ndarray
    es_buses: list[int]
    es_units: dict[int, float]
    p_charge_mw: np.ndarray
    p_discharge_mw: np.ndarray
    q_storage_mvar: np.ndarray
    soc_mwh: np.ndarray
    cone_gap_pu2: np.ndarray
    max_cone_gap_pu2: float
    balance_residual_pu: float

    def max_simultaneous_cycle_mw(self) -> float:
        """Largest min(charge, discharge) anywhere; ~0 when cycling is
        penalized."""
        if self.p_charge_mw.size == 0:
            return 0.0
        return float(np.minimum(self.p_charge_mw, self.p_discharge_mw).max())

    def periodicity_error_mwh(self) -> float:
        if self.soc_mwh.size == 0:
            return 0.0
        return float(np.abs(self.soc_mwh[:, 0] - self.soc_mwh[:, -1]).max())


def _balance_residuals(
    net: Network,
    p_import_pu: np.ndarray,
    q_import_pu: np.ndarray,
    p_flow: np.ndarray,
    q_flow: np.ndarray,
    l_sq: np.ndarray,
    injections_p: np.ndarray,
    injections_q: np.ndarray,
) -> float:
    """Max absolute nodal balance violation (pu), recomputed from
    solved arrays rather than solver-reported residuals."""
    t = p_import_pu.shape[0]
    nb, nl = net.n_buses, net.n_lines
    res_p = injections_p.copy()
    res_q = injections_q.copy()
    res_p[:, net.slack_bus] += p_import_pu
    res_q[:, net.slack_bus] += q_import_pu
    for k in range(nl):
        i, j = net.line_from[k], net.line_to[k]
        res_p[:, i] -= p_flow[:, k]
        res_q[:, i] -= q_flow[:, k]
        res_p[:, j] += p_flow[:, k] - net.r_pu[k] * l_sq[:, k]
        res_q[:, j] += q_flow[:, k] - net.x_pu[k] * l_sq[:, k]
    return float(max(np.abs(res_p).max(), np.abs(res_q).max()))


def _solve_model(
    model: AssembledModel, cp_problem: cp.Problem, opts: SolverOptions | None
) -> OperationalSolution:
    opts = opts or SolverOptions()
    problem = model.problem
    try:
        cp_problem.solve(solver=opts.solver, verbose=opts.verbose, **opts.extra)
    except cp.error.SolverError as exc:
        raise SolverError(f"{opts.solver} failed: {exc}") from exc
    status = cp_problem.status
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise InfeasibleError(
            "operational model infeasible", diagnosis=_diagnose(model, opts)
        )
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        raise SolverError("operational model unbounded; check cost signs and limits")
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverError(f"solver returned status {status!r}")
    return extract_solution(model, status)


def extract_solution(model: AssembledModel, status: str = "optimal") -> OperationalSolution:
    """Read variable values out of a solved model (also used by the
    planning layer after solving its own problem on the same model)."""
    problem = model.problem
    net = problem.network
    base = net.base_mva
    t = problem.horizon_steps
    nl = net.n_lines

    p_import = np.asarray(model.p_import.value).reshape(t)
    q_import = np.asarray(model.q_import.value).reshape(t)
    v_sq = np.asarray(model.v_sq.value).reshape(t, net.n_buses)
    if nl:
        p_flow = np.asarray(model.p_flow.value).reshape(t, nl)
        q_flow = np.asarray(model.q_flow.value).reshape(t, nl)
        l_sq = np.asarray(model.l_sq.value).reshape(t, nl)
    else:
        p_flow = np.zeros((t, 0))
        q_flow = np.zeros((t, 0))
        l_sq = np.zeros((t, 0))

    gamma = np.asarray(problem.solar_availability, dtype=float)
    ns = len(model.solar_buses)
    solar_cap = {}
    solar_out = np.zeros((ns, t))
    solar_q = np.zeros((ns, t))
    for ss, b in enumerate(model.solar_buses):
        cap = model.solar_cap_pu[ss]
        cap_val = float(cap.value) if isinstance(cap, cp.Variable) else float(cap)
        solar_cap[b] = cap_val * base
        out = model.solar_out[ss]
        out_val = out.value if hasattr(out, "value") else out
        solar_out[ss] = np.asarray(out_val).reshape(t) * base
        solar_q[ss] = np.asarray(model.solar_q.value)[:, ss] * base

    ne = len(model.es_buses)
    es_units = {}
    for jj, b in enumerate(model.es_buses):
        n = model.es_count[jj]
        es_units[b] = float(n.value) if isinstance(n, cp.Variable) else float(n)
    if ne:
        p_ch = np.asarray(model.p_charge.value).reshape(t, ne).T * base
        p_dis = np.asarray(model.p_discharge.value).reshape(t, ne).T * base
        q_es = np.asarray(model.q_storage.value).reshape(t, ne).T * base
        soc = np.asarray(model.soc.value).reshape(t + 1, ne).T * base
    else:
        p_ch = np.zeros((0, t))
        p_dis = np.zeros((0, t))
        q_es = np.zeros((0, t))
        soc = np.zeros((0, t + 1))

    # reconstruct net injections (excluding import) to audit balance
    inj_p = -problem.demand.p_mw.T / base
    inj_q = -problem.demand.q_mvar.T / base
    for ss, b in enumerate(model.solar_buses):
        inj_p[:, b] += solar_out[ss] / base
        inj_q[:, b] += solar_q[ss] / base
    for jj, b in enumerate(model.es_buses):
        inj_p[:, b] += (p_dis[jj] - p_ch[jj]) / base
        inj_q[:, b] += q_es[jj] / base
    residual = _balance_residuals(
        net, p_import, q_import, p_flow, q_flow, l_sq, inj_p, inj_q
    )

    v_from = v_sq[:, net.line_from.tolist()] if nl else np.zeros((t, 0))
    cone_gap = l_sq * v_from - (p_flow**2 + q_flow**2)
    live = [k for k in range(nl) if k not in net.degenerate_lines]
    max_gap = float(np.abs(cone_gap[:, live]).max()) if live else 0.0

    return OperationalSolution(
        status=status,
        objective_usd=float(model.op_objective.value),
        dt_h=problem.dt_h,
        base_mva=base,
        p_import_mw=p_import * base,
        q_import_mvar=q_import * base,
        v_pu2=v_sq.T,
        p_flow_mw=p_flow.T * base,
        q_flow_mvar=q_flow.T * base,
        l_pu2=l_sq.T,
        solar_buses=list(model.solar_buses),
        solar_capacity_mw=solar_cap,
        solar_output_mw=solar_out,
        solar_q_mvar=solar_q,
        es_buses=list(model.es_buses),
        es_units=es_units,
        p_charge_mw=p_ch,
        p_discharge_mw=p_dis,
        q_storage_mvar=q_es,
        soc_mwh=soc,
        cone_gap_pu2=cone_gap.T,
        max_cone_gap_pu2=max_gap,
        balance_residual_pu=residual,
    )


def _diagnose(model: AssembledModel, opts: SolverOptions) -> dict:
    """Locate an infeasibility by re-solving with slack on the nodal
    balance; if slack fixes it, the report names the worst bus and
    timestep and the shortfall size."""
    problem = model.problem
    net = problem.network
    t = problem.horizon_steps
    nb = net.n_buses
    slack_p = cp.Variable((t, nb), name="balance_slack_p")
    slack_q = cp.Variable((t, nb), name="balance_slack_q")
    relaxed: list = []
    for name, group in model.families.items():
        if name in ("real_balance", "reactive_balance"):
            continue
        relaxed.extend(group)
    # rebuild the two balance families with slack added
    for con in model.families.get("real_balance", []):
        relaxed.append(con.args[0] + slack_p == con.args[1])
    for con in model.families.get("reactive_balance", []):
        relaxed.append(con.args[0] + slack_q == con.args[1])
    relaxed_problem = cp.Problem(
        cp.Minimize(cp.sum(cp.abs(slack_p)) + cp.sum(cp.abs(slack_q))), relaxed
    )
    try:
        relaxed_problem.solve(solver=opts.solver, verbose=False, **opts.extra)
    except cp.error.SolverError:
        return {"family": "unknown", "detail": "slack-relaxed model also failed"}
    if relaxed_problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return {
            "family": "network_limits",
            "detail": "infeasible even with power-balance slack; voltage, "
            "ampacity, or device limits cannot be met",
        }
    sp = np.abs(np.asarray(slack_p.value))
    sq = np.abs(np.asarray(slack_q.value))
    worst = np.unravel_index(int(np.argmax(sp + sq)), sp.shape)
    return {
        "family": "power_balance",
        "detail": (
            f"power balance shortfall up to {sp.max() * net.base_mva:.3f} MW / "
            f"{sq.max() * net.base_mva:.3f} MVAr, worst at bus {worst[1]} "
            f"timestep {worst[0]}"
        ),
        "max_shortfall_mw": float(sp.max() * net.base_mva),
        "max_shortfall_mvar": float(sq.max() * net.base_mva),
        "worst_bus": int(worst[1]),
        "worst_step": int(worst[0]),
    }


def solve(
    problem: OperationalProblem, opts: SolverOptions | None = None
) -> OperationalSolution:
    """Assemble and solve one dispatch problem."""
    model = assemble(problem)
    return model.solve(opts)


def cone_exactness_report(
    solution: OperationalSolution, network: Network, threshold_pu2: float = 1e-5
) -> dict:
    """Where (if anywhere) the conic relaxation is loose.

    Zero-impedance lines are excluded: their current variable carries
    no physics, so a gap there is meaningless rather than alarming.
    """
    nl = network.n_lines
    live = [k for k in range(nl) if k not in network.degenerate_lines]
    gaps = solution.cone_gap_pu2
    flagged = []
    for k in live:
        worst_t = int(np.argmax(np.abs(gaps[k])))
        if abs(gaps[k, worst_t]) > threshold_pu2:
            flagged.append(
                {"line": k, "timestep": worst_t, "gap_pu2": float(gaps[k, worst_t])}
            )
    return {
        "max_gap_pu2": solution.max_cone_gap_pu2,
        "threshold_pu2": threshold_pu2,
        "tight": not flagged,
        "flagged": flagged,
        "degenerate_lines_excluded": list(network.degenerate_lines),
    }
