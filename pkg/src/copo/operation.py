"""Day-ahead unit commitment, hindsight economic dispatch, cost accounting.

Both operation models are emitted as reusable blocks so they can be composed:
standalone (the deterministic UC and the plan-given ED), jointly (the
tie-breaking subproblem and the extensive-form stochastic model, where the ED
sees the commitment plan as variables), and at fixed binaries (the LP whose
KKT system the training master embeds).

Prediction inputs to the UC block are affine references: either constants or
linear expressions over outer variables (the trainable predictor
coefficients), which is what lets one emitter serve every context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .milp import (
    DEFAULT_GAP,
    EQUAL,
    LESS_EQUAL,
    Constraint,
    LinearModel,
    ModelBuilder,
    SolveResult,
    SolveStatus,
    solve,
)
from .scenarios import OperationScenario
from .system import PowerSystem, ValidationError

# affine reference: (coefficients over outer variable names, constant)
LinExpr = tuple[dict[str, float], float]


def const_expr(value: float) -> LinExpr:
    return ({}, float(value))


def var_expr(name: str, coef: float = 1.0) -> LinExpr:
    return ({name: coef}, 0.0)


def const_grid(arr: np.ndarray) -> list[list[LinExpr]]:
    return [[const_expr(v) for v in row] for row in np.atleast_2d(arr)]


def const_column(arr: np.ndarray) -> list[LinExpr]:
    return [const_expr(v) for v in np.asarray(arr).ravel()]


class UcInfeasibleError(RuntimeError):
    """The commitment model admits no feasible schedule (it has no slacks)."""


@dataclass(frozen=True)
class Penalties:
    """Slack penalty prices in $/MWh: shortfall, surplus, branch overload."""

    shed: float = 2000.0
    surplus: float = 2000.0
    branch: float = 2000.0


@dataclass
class UcVars:
    """Variable names of one commitment block, arrays indexed [t][i]."""

    commit: list[list[str]]
    startup: list[list[str]]
    shutdown: list[list[str]]
    nr_commit: list[list[str]]
    power: list[list[str]]
    seg_power: list[list[list[str]]]  # [i][t][k]
    res_sched: list[list[str]]        # [t][j]
    sr: list[list[str]]
    nr: list[list[str]]
    b_terms: dict[str, float] = field(default_factory=dict)
    c_terms: dict[str, float] = field(default_factory=dict)

    def binaries(self) -> list[str]:
        out: list[str] = []
        for grid in (self.commit, self.startup, self.shutdown, self.nr_commit):
            for row in grid:
                out.extend(row)
        return out

    def continuous(self) -> list[str]:
        out: list[str] = []
        for row in self.power:
            out.extend(row)
        for unit in self.seg_power:
            for row in unit:
                out.extend(row)
        for grid in (self.res_sched, self.sr, self.nr):
            for row in grid:
                out.extend(row)
        return out


@dataclass
class EdVars:
    """Variable names of one dispatch block."""

    commit: list[list[str]]
    qs_commit: list[list[str]]
    qs_startup: list[list[str]]
    qs_shutdown: list[list[str]]
    power: list[list[str]]
    seg_power: list[list[list[str]]]
    res_dispatch: list[list[str]]
    shortfall: list[str]
    surplus: list[str]
    flow_over: list[list[str]]   # [t][b]
    flow_under: list[list[str]]
    d_terms: dict[str, float] = field(default_factory=dict)


def _uc_names(system: PowerSystem, prefix: str) -> UcVars:
    t_hours = system.horizon_hours
    units = system.thermal_units
    grid = lambda tag: [[f"{prefix}{tag}[{t},{u.id}]" for u in units]
                        for t in range(t_hours)]
    return UcVars(
        commit=grid("I"), startup=grid("U"), shutdown=grid("D"),
        nr_commit=grid("O"), power=grid("P"),
        seg_power=[[[f"{prefix}Psg[{t},{u.id},{k}]" for k in range(len(u.segments))]
                    for t in range(t_hours)] for u in units],
        res_sched=[[f"{prefix}W[{t},{r.id}]" for r in system.res_units]
                   for t in range(t_hours)],
        sr=grid("Rsr"), nr=grid("Rnr"),
    )


def declare_uc_variables(mb: ModelBuilder, uv: UcVars, *,
                         binaries: bool = True, free: bool = False) -> None:
    """Declare a UC block's variables.

    ``free`` drops the lower bounds of the continuous variables; the KKT path
    uses it because bounds are re-added there as dual-bearing rows.
    """
    for name in uv.binaries():
        if binaries:
            mb.binary(name)
        else:
            mb.var(name, 0.0, 1.0)
    lb = -math.inf if free else 0.0
    for name in uv.continuous():
        mb.var(name, lb, math.inf)


def uc_objective_terms(system: PowerSystem, uv: UcVars
                       ) -> tuple[dict[str, float], dict[str, float]]:
    """Commitment (startup + no-load) and generation cost coefficient maps."""
    b_terms: dict[str, float] = {}
    c_terms: dict[str, float] = {}
    for t in range(system.horizon_hours):
        for i, u in enumerate(system.thermal_units):
            b_terms[uv.startup[t][i]] = u.startup_cost
            b_terms[uv.commit[t][i]] = u.noload_cost
            for k, seg in enumerate(u.segments):
                c_terms[uv.seg_power[i][t][k]] = seg.cost_per_mwh
    return b_terms, c_terms


def _merge_expr(coeffs: dict[str, float], expr: LinExpr, sign: float) -> float:
    """Fold ``sign * expr`` into a coefficient map, returning the constant part."""
    for name, coef in expr[0].items():
        coeffs[name] = coeffs.get(name, 0.0) + sign * coef
    return sign * expr[1]


def uc_rows(system: PowerSystem, uv: UcVars, load: np.ndarray,
            res_cap: list[list[LinExpr]], sr_req: list[LinExpr],
            nr_req: list[LinExpr], *,
            include_reserve_requirement: bool = True) -> list[Constraint]:
    """Emit the commitment constraints as rows over the block's names.

    ``load`` is the (T, |Q|) forecast used by the balance and flow rows;
    ``res_cap`` caps scheduled RES per (t, j); ``sr_req``/``nr_req`` are the
    hourly reserve requirements.  All three accept affine references.
    """
    t_hours = system.horizon_hours
    units = system.thermal_units
    rows: list[Constraint] = []
    add = rows.append

    for t in range(t_hours):
        for i, u in enumerate(units):
            I, U, D, O = (uv.commit[t][i], uv.startup[t][i],
                          uv.shutdown[t][i], uv.nr_commit[t][i])
            P, Rsr, Rnr = uv.power[t][i], uv.sr[t][i], uv.nr[t][i]
            add(Constraint({P: -1.0, Rsr: 1.0, I: u.p_min}, LESS_EQUAL, 0.0,
                           f"gen_min[{t},{u.id}]"))
            add(Constraint({P: 1.0, Rsr: 1.0, I: -u.p_max}, LESS_EQUAL, 0.0,
                           f"gen_max[{t},{u.id}]"))
            seg_sum = {P: 1.0}
            for k in range(len(u.segments)):
                seg_sum[uv.seg_power[i][t][k]] = -1.0
                add(Constraint({uv.seg_power[i][t][k]: 1.0,
                                I: -u.segments[k].width_mw}, LESS_EQUAL, 0.0,
                               f"seg_cap[{t},{u.id},{k}]"))
            add(Constraint(seg_sum, EQUAL, 0.0, f"seg_sum[{t},{u.id}]"))
            add(Constraint({Rsr: 1.0, I: -u.sr_max}, LESS_EQUAL, 0.0,
                           f"sr_cap[{t},{u.id}]"))
            add(Constraint({Rnr: -1.0, O: u.p_min}, LESS_EQUAL, 0.0,
                           f"nr_min[{t},{u.id}]"))
            add(Constraint({Rnr: 1.0, O: -u.nr_max}, LESS_EQUAL, 0.0,
                           f"nr_cap[{t},{u.id}]"))
            # status logic against the previous hour (initial state at t=0)
            logic = {U: 1.0, D: -1.0, I: -1.0}
            if t > 0:
                logic[uv.commit[t - 1][i]] = 1.0
                rhs = 0.0
            else:
                rhs = -float(u.initial_status.committed)
            add(Constraint(logic, EQUAL, rhs, f"status[{t},{u.id}]"))
            # minimum up/down windows, truncated at the horizon start
            up = {uv.startup[tp][i]: 1.0
                  for tp in range(max(0, t - u.min_up + 1), t + 1)}
            up[I] = up.get(I, 0.0) - 1.0
            add(Constraint(up, LESS_EQUAL, 0.0, f"min_up[{t},{u.id}]"))
            down = {uv.shutdown[tp][i]: 1.0
                    for tp in range(max(0, t - u.min_down + 1), t + 1)}
            down[I] = down.get(I, 0.0) + 1.0
            add(Constraint(down, LESS_EQUAL, 1.0, f"min_down[{t},{u.id}]"))
            # ramping with startup/shutdown allowances
            up_ramp = {P: 1.0, I: u.p_max - u.startup_ramp}
            dn_ramp = {P: -1.0, I: u.shutdown_ramp - u.ramp_down}
            if t > 0:
                up_ramp[uv.power[t - 1][i]] = -1.0
                up_ramp[uv.commit[t - 1][i]] = u.startup_ramp - u.ramp_up
                add(Constraint(up_ramp, LESS_EQUAL, u.p_max,
                               f"ramp_up[{t},{u.id}]"))
                dn_ramp[uv.power[t - 1][i]] = 1.0
                dn_ramp[uv.commit[t - 1][i]] = u.p_max - u.shutdown_ramp
                add(Constraint(dn_ramp, LESS_EQUAL, u.p_max,
                               f"ramp_down[{t},{u.id}]"))
            else:
                i0 = float(u.initial_status.committed)
                p0 = u.initial_status.output_mw
                add(Constraint(up_ramp, LESS_EQUAL,
                               u.p_max + p0 - (u.startup_ramp - u.ramp_up) * i0,
                               f"ramp_up[{t},{u.id}]"))
                add(Constraint(dn_ramp, LESS_EQUAL,
                               u.p_max - p0 - (u.p_max - u.shutdown_ramp) * i0,
                               f"ramp_down[{t},{u.id}]"))
            add(Constraint({O: 1.0, I: 1.0}, LESS_EQUAL, 1.0,
                           f"nr_excl[{t},{u.id}]"))
            if not u.quick_start:
                add(Constraint({O: 1.0}, EQUAL, 0.0, f"nr_zero[{t},{u.id}]"))

        for j in range(system.n_res):
            coeffs = {uv.res_sched[t][j]: 1.0}
            rhs = _merge_expr(coeffs, res_cap[t][j], -1.0)
            add(Constraint(coeffs, LESS_EQUAL, -rhs, f"res_cap[{t},{j}]"))

        balance = {uv.power[t][i]: 1.0 for i in range(len(units))}
        for j in range(system.n_res):
            balance[uv.res_sched[t][j]] = 1.0
        add(Constraint(balance, EQUAL, float(load[t].sum()), f"balance[{t}]"))

        for b_idx, flow in _flow_exprs(system, uv.power[t], uv.res_sched[t], load[t]):
            branch = system.branches[b_idx]
            coeffs, shift = flow
            add(Constraint(dict(coeffs), LESS_EQUAL, branch.capacity_mw + shift,
                           f"flow_hi[{t},{branch.id}]"))
            add(Constraint({k: -v for k, v in coeffs.items()}, LESS_EQUAL,
                           branch.capacity_mw - shift, f"flow_lo[{t},{branch.id}]"))

        if include_reserve_requirement:
            sr_row = {uv.sr[t][i]: -1.0 for i in range(len(units))}
            rhs = _merge_expr(sr_row, sr_req[t], 1.0)
            add(Constraint(sr_row, LESS_EQUAL, -rhs, f"sr_req[{t}]"))
            tot_row = {uv.sr[t][i]: -1.0 for i in range(len(units))}
            tot_row.update({uv.nr[t][i]: -1.0 for i in range(len(units))})
            rhs = _merge_expr(tot_row, sr_req[t], 1.0)
            rhs += _merge_expr(tot_row, nr_req[t], 1.0)
            add(Constraint(tot_row, LESS_EQUAL, -rhs, f"reserve_req[{t}]"))
    return rows


def _flow_exprs(system: PowerSystem, power_names: list[str],
                res_names: list[str], load_row: np.ndarray):
    """Per-branch flow coefficient maps and the constant load shift."""
    if not system.branches:
        return
    idx = system.bus_index()
    for b_idx, branch in enumerate(system.branches):
        if branch.sensitivity_row is None:
            raise ValidationError(
                f"branch {branch.id}: sensitivity row missing; "
                "run build_sensitivities first")
        row = branch.sensitivity_row
        coeffs: dict[str, float] = {}
        for i, u in enumerate(system.thermal_units):
            f = row[idx[u.bus]]
            if f != 0.0:
                coeffs[power_names[i]] = coeffs.get(power_names[i], 0.0) + f
        for j, r in enumerate(system.res_units):
            f = row[idx[r.bus]]
            if f != 0.0:
                coeffs[res_names[j]] = coeffs.get(res_names[j], 0.0) + f
        shift = sum(row[idx[q]] * load_row[qq]
                    for qq, q in enumerate(system.load_buses))
        yield b_idx, (coeffs, shift)


def add_uc_block(mb: ModelBuilder, system: PowerSystem, prefix: str,
                 load: np.ndarray, res_cap: list[list[LinExpr]],
                 sr_req: list[LinExpr], nr_req: list[LinExpr], *,
                 include_reserve_requirement: bool = True,
                 obj_commit_weight: float = 1.0,
                 obj_generation_weight: float = 1.0) -> UcVars:
    """Declare and constrain one commitment block; returns its names."""
    uv = _uc_names(system, prefix)
    declare_uc_variables(mb, uv)
    for row in uc_rows(system, uv, load, res_cap, sr_req, nr_req,
                       include_reserve_requirement=include_reserve_requirement):
        mb.constr(row.coeffs, row.sense, row.rhs, row.name)
    uv.b_terms, uv.c_terms = uc_objective_terms(system, uv)
    if obj_commit_weight:
        mb.add_objective(uv.b_terms, obj_commit_weight)
    if obj_generation_weight:
        mb.add_objective(uv.c_terms, obj_generation_weight)
    return uv


def build_uc(system: PowerSystem, res_prediction: np.ndarray,
             reserve_prediction: np.ndarray, load_prediction: np.ndarray
             ) -> tuple[LinearModel, UcVars]:
    """Build the deterministic day-ahead commitment model.

    ``res_prediction`` is (T, |J|), ``reserve_prediction`` (T, 2) as
    (SR, NR), ``load_prediction`` (T, |Q|).
    """
    t_hours = system.horizon_hours
    res_prediction = np.asarray(res_prediction, dtype=float).reshape(t_hours, system.n_res)
    reserve_prediction = np.asarray(reserve_prediction, dtype=float).reshape(t_hours, 2)
    load_prediction = np.asarray(load_prediction, dtype=float).reshape(
        t_hours, len(system.load_buses))
    if np.any(res_prediction < 0) or np.any(reserve_prediction < 0):
        raise ValidationError("predictions must be nonnegative")
    mb = ModelBuilder()
    uv = add_uc_block(mb, system, "uc_", load_prediction,
                      const_grid(res_prediction) if system.n_res else
                      [[] for _ in range(t_hours)],
                      const_column(reserve_prediction[:, 0]),
                      const_column(reserve_prediction[:, 1]))
    return mb.build(), uv


# ---------------------------------------------------------------------------
# dispatch block


@dataclass
class CommitmentPlan:
    """Day-ahead decisions: statuses, schedules, and their committed costs."""

    commit: np.ndarray
    startup: np.ndarray
    shutdown: np.ndarray
    nr_commit: np.ndarray
    power: np.ndarray
    seg_power: list[np.ndarray]
    res_schedule: np.ndarray
    sr: np.ndarray
    nr: np.ndarray
    uc_cost_startup: float
    uc_cost_noload: float
    uc_cost_generation: float
    anticipated_cost: float

    def validate(self, system: PowerSystem, tol: float = 1e-6) -> None:
        prev = np.array([float(u.initial_status.committed)
                         for u in system.thermal_units])
        for t in range(self.commit.shape[0]):
            if np.any(np.abs(self.startup[t] - self.shutdown[t]
                             - (self.commit[t] - prev)) > tol):
                raise ValidationError(f"plan: status logic broken at hour {t + 1}")
            prev = self.commit[t]
        for i in range(self.power.shape[1]):
            if np.any(np.abs(self.power[:, i] - self.seg_power[i].sum(axis=1)) > tol):
                raise ValidationError("plan: total power != sum of segments")
        if np.any(self.nr_commit + self.commit > 1 + tol):
            raise ValidationError("plan: unit both committed and NR-committed")
        for i, u in enumerate(system.thermal_units):
            if not u.quick_start and np.any(self.nr_commit[:, i] > tol):
                raise ValidationError(
                    f"plan: non-quick-start unit {u.id} holds NR commitment")
        for name in ("power", "res_schedule", "sr", "nr"):
            if np.any(getattr(self, name) < -tol):
                raise ValidationError(f"plan: negative {name}")


@dataclass
class DispatchOutcome:
    """Hindsight dispatch: recommitments, outputs, slacks, and cost split."""

    commit: np.ndarray
    qs_commit: np.ndarray
    qs_startup: np.ndarray
    qs_shutdown: np.ndarray
    power: np.ndarray
    seg_power: list[np.ndarray]
    res_dispatch: np.ndarray
    shortfall: np.ndarray
    surplus: np.ndarray
    flow_over: np.ndarray
    flow_under: np.ndarray
    ed_cost_startup: float
    ed_cost_noload: float
    ed_cost_generation: float
    ed_cost_slack: float

    @property
    def ed_cost(self) -> float:
        return (self.ed_cost_startup + self.ed_cost_noload
                + self.ed_cost_generation + self.ed_cost_slack)

    def validate(self, plan: CommitmentPlan, tol: float = 1e-6) -> None:
        if np.any(np.abs(self.commit - plan.commit - self.qs_commit) > tol):
            raise ValidationError("dispatch: commitment != plan + recommitment")
        if np.any(self.qs_commit > plan.nr_commit + tol):
            raise ValidationError("dispatch: recommitment without NR commitment")
        for name in ("shortfall", "surplus", "flow_over", "flow_under"):
            if np.any(getattr(self, name) < -tol):
                raise ValidationError(f"dispatch: negative {name}")


@dataclass
class CostReport:
    """Actual system cost split, mirroring the evaluation CSV columns."""

    uc_startup: float
    uc_noload: float
    ed_startup: float
    ed_noload: float
    ed_generation: float
    ed_slack: float

    @property
    def actual_uc_cost(self) -> float:
        return self.uc_startup + self.uc_noload

    @property
    def hindsight_ed_cost(self) -> float:
        return (self.ed_startup + self.ed_noload + self.ed_generation
                + self.ed_slack)

    @property
    def actual_system_cost(self) -> float:
        return self.actual_uc_cost + self.hindsight_ed_cost

    def as_row(self) -> dict[str, float]:
        return {
            "startup": self.uc_startup,
            "no_load": self.uc_noload,
            "ed_startup_noload": self.ed_startup + self.ed_noload,
            "ed_generation": self.ed_generation,
            "ed_slack": self.ed_slack,
            "total": self.actual_system_cost,
        }


def _ed_names(system: PowerSystem, prefix: str) -> EdVars:
    t_hours = system.horizon_hours
    units = system.thermal_units
    grid = lambda tag: [[f"{prefix}{tag}[{t},{u.id}]" for u in units]
                        for t in range(t_hours)]
    return EdVars(
        commit=grid("Ie"), qs_commit=grid("Iq"), qs_startup=grid("Uq"),
        qs_shutdown=grid("Dq"), power=grid("Pe"),
        seg_power=[[[f"{prefix}Psge[{t},{u.id},{k}]" for k in range(len(u.segments))]
                    for t in range(t_hours)] for u in units],
        res_dispatch=[[f"{prefix}We[{t},{r.id}]" for r in system.res_units]
                      for t in range(t_hours)],
        shortfall=[f"{prefix}S1[{t}]" for t in range(t_hours)],
        surplus=[f"{prefix}S2[{t}]" for t in range(t_hours)],
        flow_over=[[f"{prefix}S3[{t},{b.id}]" for b in system.branches]
                   for t in range(t_hours)],
        flow_under=[[f"{prefix}S4[{t},{b.id}]" for b in system.branches]
                    for t in range(t_hours)],
    )


def add_ed_block(mb: ModelBuilder, system: PowerSystem, prefix: str,
                 plan: CommitmentPlan | UcVars, actual_res: np.ndarray,
                 actual_load: np.ndarray, penalties: Penalties, *,
                 obj_weight: float = 1.0) -> EdVars:
    """Declare and constrain one dispatch block against realized RES/load.

    ``plan`` is either a solved :class:`CommitmentPlan` (constants) or the
    :class:`UcVars` of a commitment block in the same model.  In the variable
    case the product of scheduled NR and the recommitment binary is
    linearized exactly (binary times bounded continuous).
    """
    t_hours = system.horizon_hours
    units = system.thermal_units
    variable_plan = isinstance(plan, UcVars)
    ev = _ed_names(system, prefix)

    for name in (ev.commit, ev.qs_commit, ev.qs_startup, ev.qs_shutdown):
        for row in name:
            for v in row:
                mb.binary(v)
    for row in ev.power:
        for v in row:
            mb.var(v, 0.0, math.inf)
    for unit in ev.seg_power:
        for row in unit:
            for v in row:
                mb.var(v, 0.0, math.inf)
    for t in range(t_hours):
        for j in range(system.n_res):
            mb.var(ev.res_dispatch[t][j], 0.0, float(actual_res[t, j]))
        mb.var(ev.shortfall[t], 0.0, math.inf)
        mb.var(ev.surplus[t], 0.0, math.inf)
        for name in ev.flow_over[t] + ev.flow_under[t]:
            mb.var(name, 0.0, math.inf)

    if variable_plan:
        # exact linearization of scheduled-NR times recommitment binary
        psi = [[mb.var(f"{prefix}psi[{t},{u.id}]", 0.0, math.inf)
                for u in units] for t in range(t_hours)]
        for t in range(t_hours):
            for i, u in enumerate(units):
                mb.constr({psi[t][i]: 1.0, ev.qs_commit[t][i]: -u.nr_max},
                          LESS_EQUAL, 0.0, f"{prefix}psi_cap[{t},{u.id}]")
                mb.constr({psi[t][i]: 1.0, plan.nr[t][i]: -1.0},
                          LESS_EQUAL, 0.0, f"{prefix}psi_nr[{t},{u.id}]")
                mb.constr({plan.nr[t][i]: 1.0, psi[t][i]: -1.0,
                           ev.qs_commit[t][i]: u.nr_max},
                          LESS_EQUAL, u.nr_max, f"{prefix}psi_lo[{t},{u.id}]")

    for t in range(t_hours):
        for i, u in enumerate(units):
            Ie, Iq = ev.commit[t][i], ev.qs_commit[t][i]
            Uq, Dq = ev.qs_startup[t][i], ev.qs_shutdown[t][i]
            Pe = ev.power[t][i]
            if variable_plan:
                mb.constr({Ie: 1.0, Iq: -1.0, plan.commit[t][i]: -1.0},
                          EQUAL, 0.0, f"{prefix}link[{t},{u.id}]")
                mb.constr({Iq: 1.0, plan.nr_commit[t][i]: -1.0},
                          LESS_EQUAL, 0.0, f"{prefix}qs_window[{t},{u.id}]")
            else:
                mb.constr({Ie: 1.0, Iq: -1.0}, EQUAL, float(plan.commit[t, i]),
                          f"{prefix}link[{t},{u.id}]")
                mb.constr({Iq: 1.0}, LESS_EQUAL, float(plan.nr_commit[t, i]),
                          f"{prefix}qs_window[{t},{u.id}]")
            logic = {Uq: 1.0, Dq: -1.0, Iq: -1.0}
            if t > 0:
                logic[ev.qs_commit[t - 1][i]] = 1.0
            mb.constr(logic, EQUAL, 0.0, f"{prefix}qs_status[{t},{u.id}]")

            seg_sum = {Pe: 1.0}
            for k, seg in enumerate(u.segments):
                seg_sum[ev.seg_power[i][t][k]] = -1.0
                mb.constr({ev.seg_power[i][t][k]: 1.0, Ie: -seg.width_mw},
                          LESS_EQUAL, 0.0, f"{prefix}seg_cap[{t},{u.id},{k}]")
            mb.constr(seg_sum, EQUAL, 0.0, f"{prefix}seg_sum[{t},{u.id}]")
            mb.constr({Pe: -1.0, Ie: u.p_min}, LESS_EQUAL, 0.0,
                      f"{prefix}out_min[{t},{u.id}]")
            if variable_plan:
                mb.constr({Pe: 1.0, plan.commit[t][i]: -u.p_max,
                           psi[t][i]: -1.0}, LESS_EQUAL, 0.0,
                          f"{prefix}out_max[{t},{u.id}]")
                # redispatch band around the scheduled base point; spinning
                # reserve appears bare because the commitment block already
                # forces it to zero on offline units
                mb.constr({plan.power[t][i]: 1.0, plan.sr[t][i]: -1.0,
                           Pe: -1.0}, LESS_EQUAL, 0.0,
                          f"{prefix}band_dn[{t},{u.id}]")
                mb.constr({Pe: 1.0, plan.power[t][i]: -1.0,
                           plan.sr[t][i]: -1.0, Iq: -u.p_max},
                          LESS_EQUAL, 0.0, f"{prefix}band_up[{t},{u.id}]")
            else:
                nr_avail = float(plan.nr[t, i])
                mb.constr({Pe: 1.0, Iq: -nr_avail}, LESS_EQUAL,
                          u.p_max * float(plan.commit[t, i]),
                          f"{prefix}out_max[{t},{u.id}]")
                band = float(plan.sr[t, i]) * float(plan.commit[t, i])
                base = float(plan.power[t, i])
                mb.constr({Pe: -1.0}, LESS_EQUAL, band - base,
                          f"{prefix}band_dn[{t},{u.id}]")
                mb.constr({Pe: 1.0, Iq: -u.p_max}, LESS_EQUAL, base + band,
                          f"{prefix}band_up[{t},{u.id}]")

            up_ramp = {Pe: 1.0, Ie: u.p_max - u.startup_ramp}
            dn_ramp = {Pe: -1.0, Ie: u.shutdown_ramp - u.ramp_down}
            if t > 0:
                up_ramp[ev.power[t - 1][i]] = -1.0
                up_ramp[ev.commit[t - 1][i]] = u.startup_ramp - u.ramp_up
                mb.constr(up_ramp, LESS_EQUAL, u.p_max,
                          f"{prefix}ramp_up[{t},{u.id}]")
                dn_ramp[ev.power[t - 1][i]] = 1.0
                dn_ramp[ev.commit[t - 1][i]] = u.p_max - u.shutdown_ramp
                mb.constr(dn_ramp, LESS_EQUAL, u.p_max,
                          f"{prefix}ramp_down[{t},{u.id}]")
            else:
                i0 = float(u.initial_status.committed)
                p0 = u.initial_status.output_mw
                mb.constr(up_ramp, LESS_EQUAL,
                          u.p_max + p0 - (u.startup_ramp - u.ramp_up) * i0,
                          f"{prefix}ramp_up[{t},{u.id}]")
                mb.constr(dn_ramp, LESS_EQUAL,
                          u.p_max - p0 - (u.p_max - u.shutdown_ramp) * i0,
                          f"{prefix}ramp_down[{t},{u.id}]")

        balance = {ev.power[t][i]: 1.0 for i in range(len(units))}
        for j in range(system.n_res):
            balance[ev.res_dispatch[t][j]] = 1.0
        balance[ev.shortfall[t]] = 1.0
        balance[ev.surplus[t]] = -1.0
        mb.constr(balance, EQUAL, float(actual_load[t].sum()),
                  f"{prefix}balance[{t}]")

        for b_idx, (coeffs, shift) in _flow_exprs(
                system, ev.power[t], ev.res_dispatch[t], actual_load[t]):
            branch = system.branches[b_idx]
            hi = dict(coeffs)
            hi[ev.flow_over[t][b_idx]] = -1.0
            mb.constr(hi, LESS_EQUAL, branch.capacity_mw + shift,
                      f"{prefix}flow_hi[{t},{branch.id}]")
            lo = {k: -v for k, v in coeffs.items()}
            lo[ev.flow_under[t][b_idx]] = -1.0
            mb.constr(lo, LESS_EQUAL, branch.capacity_mw - shift,
                      f"{prefix}flow_lo[{t},{branch.id}]")

    d_terms: dict[str, float] = {}
    for t in range(t_hours):
        for i, u in enumerate(units):
            d_terms[ev.qs_startup[t][i]] = u.startup_cost
            d_terms[ev.qs_commit[t][i]] = u.noload_cost
            for k, seg in enumerate(u.segments):
                d_terms[ev.seg_power[i][t][k]] = seg.cost_per_mwh
        d_terms[ev.shortfall[t]] = penalties.shed
        d_terms[ev.surplus[t]] = penalties.surplus
        for name in ev.flow_over[t] + ev.flow_under[t]:
            d_terms[name] = penalties.branch
    ev.d_terms = d_terms
    if obj_weight:
        mb.add_objective(d_terms, obj_weight)
    return ev


def build_ed(system: PowerSystem, plan: CommitmentPlan, actual_res: np.ndarray,
             actual_load: np.ndarray,
             penalties: Penalties = Penalties()) -> tuple[LinearModel, EdVars]:
    """Build the hindsight dispatch model for a given commitment plan."""
    plan.validate(system)
    t_hours = system.horizon_hours
    actual_res = np.asarray(actual_res, dtype=float).reshape(t_hours, system.n_res)
    actual_load = np.asarray(actual_load, dtype=float).reshape(
        t_hours, len(system.load_buses))
    mb = ModelBuilder()
    ev = add_ed_block(mb, system, "ed_", plan, actual_res, actual_load, penalties)
    return mb.build(), ev


# ---------------------------------------------------------------------------
# extraction and accounting


def extract_plan(system: PowerSystem, uv: UcVars, result: SolveResult
                 ) -> CommitmentPlan:
    t_hours = system.horizon_hours
    n = system.n_thermal
    pull = lambda grid: np.array([[result.values[grid[t][i]] for i in range(n)]
                                  for t in range(t_hours)])
    pull_bin = lambda grid: np.array(
        [[float(result.binary(grid[t][i])) for i in range(n)]
         for t in range(t_hours)])
    seg = [np.array([[result.values[name] for name in uv.seg_power[i][t]]
                     for t in range(t_hours)]) for i in range(n)]
    res = np.array([[result.values[name] for name in uv.res_sched[t]]
                    for t in range(t_hours)]).reshape(t_hours, system.n_res)
    startup = pull_bin(uv.startup)
    commit = pull_bin(uv.commit)
    cost_startup = float(sum(u.startup_cost * startup[:, i].sum()
                             for i, u in enumerate(system.thermal_units)))
    cost_noload = float(sum(u.noload_cost * commit[:, i].sum()
                            for i, u in enumerate(system.thermal_units)))
    cost_gen = float(sum(seg[i][:, k].sum() * s.cost_per_mwh
                         for i, u in enumerate(system.thermal_units)
                         for k, s in enumerate(u.segments)))
    return CommitmentPlan(
        commit=commit, startup=startup, shutdown=pull_bin(uv.shutdown),
        nr_commit=pull_bin(uv.nr_commit), power=pull(uv.power), seg_power=seg,
        res_schedule=res, sr=pull(uv.sr), nr=pull(uv.nr),
        uc_cost_startup=cost_startup, uc_cost_noload=cost_noload,
        uc_cost_generation=cost_gen,
        anticipated_cost=cost_startup + cost_noload + cost_gen)


def extract_outcome(system: PowerSystem, ev: EdVars, result: SolveResult,
                    penalties: Penalties) -> DispatchOutcome:
    t_hours = system.horizon_hours
    n = system.n_thermal
    pull = lambda grid: np.array([[result.values[grid[t][i]] for i in range(n)]
                                  for t in range(t_hours)])
    pull_bin = lambda grid: np.array(
        [[float(result.binary(grid[t][i])) for i in range(n)]
         for t in range(t_hours)])
    seg = [np.array([[result.values[name] for name in ev.seg_power[i][t]]
                     for t in range(t_hours)]) for i in range(n)]
    res = np.array([[result.values[name] for name in ev.res_dispatch[t]]
                    for t in range(t_hours)]).reshape(t_hours, system.n_res)
    shortfall = np.array([result.values[v] for v in ev.shortfall])
    surplus = np.array([result.values[v] for v in ev.surplus])
    n_b = len(system.branches)
    flow_over = np.array([[result.values[v] for v in ev.flow_over[t]]
                          for t in range(t_hours)]).reshape(t_hours, n_b)
    flow_under = np.array([[result.values[v] for v in ev.flow_under[t]]
                           for t in range(t_hours)]).reshape(t_hours, n_b)
    qs_startup = pull_bin(ev.qs_startup)
    qs_commit = pull_bin(ev.qs_commit)
    cost_startup = float(sum(u.startup_cost * qs_startup[:, i].sum()
                             for i, u in enumerate(system.thermal_units)))
    cost_noload = float(sum(u.noload_cost * qs_commit[:, i].sum()
                            for i, u in enumerate(system.thermal_units)))
    cost_gen = float(sum(seg[i][:, k].sum() * s.cost_per_mwh
                         for i, u in enumerate(system.thermal_units)
                         for k, s in enumerate(u.segments)))
    cost_slack = float(penalties.shed * shortfall.sum()
                       + penalties.surplus * surplus.sum()
                       + penalties.branch * (flow_over.sum() + flow_under.sum()))
    return DispatchOutcome(
        commit=pull_bin(ev.commit), qs_commit=qs_commit,
        qs_startup=qs_startup, qs_shutdown=pull_bin(ev.qs_shutdown),
        power=pull(ev.power), seg_power=seg, res_dispatch=res,
        shortfall=shortfall, surplus=surplus, flow_over=flow_over,
        flow_under=flow_under, ed_cost_startup=cost_startup,
        ed_cost_noload=cost_noload, ed_cost_generation=cost_gen,
        ed_cost_slack=cost_slack)


def actual_cost(plan: CommitmentPlan, outcome: DispatchOutcome) -> CostReport:
    """Actual system cost: committed startup/no-load plus the hindsight
    dispatch cost."""
    return CostReport(
        uc_startup=plan.uc_cost_startup,
        uc_noload=plan.uc_cost_noload,
        ed_startup=outcome.ed_cost_startup,
        ed_noload=outcome.ed_cost_noload,
        ed_generation=outcome.ed_cost_generation,
        ed_slack=outcome.ed_cost_slack,
    )


def run_open_loop(system: PowerSystem, scenario: OperationScenario,
                  penalties: Penalties = Penalties(), *, gap: float = DEFAULT_GAP
                  ) -> tuple[CommitmentPlan, DispatchOutcome, CostReport]:
    """Commit on the raw predictions, dispatch against the realization.

    This is the open-loop baseline and the inner evaluation loop used by
    every method; commitment infeasibility is a hard error because the
    commitment model carries no slacks.
    """
    model, uv = build_uc(system, scenario.raw_res_prediction,
                         scenario.raw_reserve, scenario.raw_load_prediction)
    result = solve(model, gap=gap)
    if result.status == SolveStatus.INFEASIBLE:
        raise UcInfeasibleError(
            f"commitment model infeasible for scenario {scenario.id}")
    plan = extract_plan(system, uv, result)
    ed_model, ev = build_ed(system, plan, scenario.actual_res,
                            scenario.actual_load, penalties)
    ed_result = solve(ed_model, gap=gap)
    outcome = extract_outcome(system, ev, ed_result, penalties)
    return plan, outcome, actual_cost(plan, outcome)


def variable_counts(model: LinearModel) -> tuple[int, int]:
    """(binary, continuous) variable counts of a built model."""
    n_bin = sum(1 for v in model.variables if v.integer)
    return n_bin, len(model.variables) - n_bin


def uc_variable_inventory(system: PowerSystem) -> tuple[int, int]:
    """Expected (binary, continuous) counts of the commitment model."""
    t = system.horizon_hours
    n = system.n_thermal
    segs = sum(len(u.segments) for u in system.thermal_units)
    return 4 * t * n, t * (3 * n + segs + system.n_res)


def ed_variable_inventory(system: PowerSystem) -> tuple[int, int]:
    """Expected (binary, continuous) counts of the dispatch model."""
    t = system.horizon_hours
    n = system.n_thermal
    segs = sum(len(u.segments) for u in system.thermal_units)
    return 4 * t * n, t * (n + segs + system.n_res + 2 + 2 * len(system.branches))
