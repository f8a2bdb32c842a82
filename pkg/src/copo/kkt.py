"""Automated KKT-system derivation for linear programs.

Given an LP ``min c'y  s.t.  A_eq y = b_eq,  A_ub y <= b_ub``, satisfaction of
the KKT system (stationarity, primal/dual feasibility, complementarity) is
equivalent to optimality of ``y``.  Complementarity ``nu_k * g_k = 0`` is
linearized with indicator binaries and Big-M constants::

    nu_k <= M_dual * delta_k          -g_k <= M_primal * (1 - delta_k)

The Big-M constants are heuristic, so every KKT-embedded solve is followed by
a binding check: if any nu or slack sits against its Big-M bound the result
cannot be trusted and a diagnostic is raised.

The block appender works inside a larger model: constraint rows may reference
variables that are *not* LP variables (parameters of the LP from the outer
problem).  Those appear in primal-feasibility and complementarity rows but not
in stationarity, which runs over the LP variables only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .milp import (
    EQUAL,
    GREATER_EQUAL,
    LESS_EQUAL,
    Constraint,
    LinearModel,
    ModelBuilder,
    SolveResult,
    fix_binaries,
    solve,
)

DEFAULT_BIG_M_PRIMAL = 1e5
DEFAULT_BIG_M_DUAL = 1e5
BINDING_TOL = 1e-4


class KktDerivationError(ValueError):
    """The input model cannot be KKT-reformulated (e.g. it has integers)."""


class KktBigMBindingError(RuntimeError):
    """A complementarity Big-M bound is active: the constants are too small."""


@dataclass
class KktBlock:
    """Names and rows of one appended KKT block, kept for diagnostics."""

    lp_var_names: list[str]
    eq_dual_names: list[str]
    ineq_dual_names: list[str]
    indicator_names: list[str]
    inequalities: list[Constraint]
    big_m_primal: float
    big_m_dual: float


@dataclass
class KktSystem:
    """A feasibility MIP whose solutions are exactly the LP's optimal points."""

    model: LinearModel
    block: KktBlock
    lp_objective: dict[str, float] = field(default_factory=dict)
    lp_objective_constant: float = 0.0

    def objective_value(self, values: dict[str, float]) -> float:
        return self.lp_objective_constant + sum(
            coef * values[name] for name, coef in self.lp_objective.items()
        )


def append_kkt_conditions(mb: ModelBuilder, *, lp_var_names: list[str],
                          lp_objective: dict[str, float],
                          equalities: list[Constraint],
                          inequalities: list[Constraint],
                          prefix: str,
                          big_m_primal: float = DEFAULT_BIG_M_PRIMAL,
                          big_m_dual: float = DEFAULT_BIG_M_DUAL) -> KktBlock:
    """Append the KKT system of an LP to a model under construction.

    ``equalities`` must carry sense ``==`` and ``inequalities`` sense ``<=``
    (already normalized).  The LP variables must be declared in ``mb`` with
    free bounds; bound rows must be part of ``inequalities`` if duals for
    them matter.
    """
    lp_vars = set(lp_var_names)
    for con in equalities:
        if con.sense != EQUAL:
            raise KktDerivationError("equalities must have sense ==")
    for con in inequalities:
        if con.sense != LESS_EQUAL:
            raise KktDerivationError("inequalities must be <=-normalized")

    mu = [mb.var(f"{prefix}mu[{k}]", -math.inf, math.inf)
          for k in range(len(equalities))]
    nu = [mb.var(f"{prefix}nu[{k}]", 0.0, math.inf)
          for k in range(len(inequalities))]
    delta = [mb.binary(f"{prefix}delta[{k}]") for k in range(len(inequalities))]

    # primal feasibility
    for k, con in enumerate(equalities):
        mb.constr(con.coeffs, EQUAL, con.rhs, f"{prefix}peq[{k}]")
    for k, con in enumerate(inequalities):
        mb.constr(con.coeffs, LESS_EQUAL, con.rhs, f"{prefix}pin[{k}]")

    # stationarity: c + A_eq' mu + A_ub' nu = 0, one row per LP variable;
    # parameter columns are skipped by construction
    columns: dict[str, dict[str, float]] = {v: {} for v in lp_var_names}
    for k, con in enumerate(equalities):
        for name, coef in con.coeffs.items():
            if name in lp_vars and coef != 0.0:
                columns[name][mu[k]] = columns[name].get(mu[k], 0.0) + coef
    for k, con in enumerate(inequalities):
        for name, coef in con.coeffs.items():
            if name in lp_vars and coef != 0.0:
                columns[name][nu[k]] = columns[name].get(nu[k], 0.0) + coef
    for v in lp_var_names:
        mb.constr(columns[v], EQUAL, -lp_objective.get(v, 0.0),
                  f"{prefix}stat[{v}]")

    # complementarity via Big-M indicators
    for k, con in enumerate(inequalities):
        mb.constr({nu[k]: 1.0, delta[k]: -big_m_dual}, LESS_EQUAL, 0.0,
                  f"{prefix}cnu[{k}]")
        slack_coeffs = {name: -coef for name, coef in con.coeffs.items()}
        slack_coeffs[delta[k]] = slack_coeffs.get(delta[k], 0.0) + big_m_primal
        mb.constr(slack_coeffs, LESS_EQUAL, big_m_primal - con.rhs,
                  f"{prefix}cslack[{k}]")

    return KktBlock(list(lp_var_names), mu, nu, delta,
                    list(inequalities), big_m_primal, big_m_dual)


def normalize_lp(lp: LinearModel) -> tuple[list[Constraint], list[Constraint]]:
    """Split an LP into equalities and <=-normalized inequalities.

    Finite variable bounds become explicit inequality rows so that they carry
    duals in the KKT system.
    """
    equalities: list[Constraint] = []
    inequalities: list[Constraint] = []
    for con in lp.constraints:
        if con.sense == EQUAL:
            equalities.append(con)
        elif con.sense == LESS_EQUAL:
            inequalities.append(con)
        elif con.sense == GREATER_EQUAL:
            inequalities.append(Constraint(
                {k: -v for k, v in con.coeffs.items()}, LESS_EQUAL, -con.rhs,
                con.name))
    for v in lp.variables:
        if math.isfinite(v.lb):
            inequalities.append(Constraint({v.name: -1.0}, LESS_EQUAL, -v.lb,
                                           f"lb[{v.name}]"))
        if math.isfinite(v.ub):
            inequalities.append(Constraint({v.name: 1.0}, LESS_EQUAL, v.ub,
                                           f"ub[{v.name}]"))
    return equalities, inequalities


def derive_kkt(lp: LinearModel, big_m_primal: float = DEFAULT_BIG_M_PRIMAL,
               big_m_dual: float = DEFAULT_BIG_M_DUAL) -> KktSystem:
    """Derive the KKT feasibility MIP of a pure LP."""
    lp.validate()
    if lp.integer_names():
        raise KktDerivationError("model contains integer variables")
    equalities, inequalities = normalize_lp(lp)
    mb = ModelBuilder()
    names = [v.name for v in lp.variables]
    for v in lp.variables:
        mb.var(v.name, -math.inf, math.inf)
    block = append_kkt_conditions(
        mb, lp_var_names=names, lp_objective=lp.objective,
        equalities=equalities, inequalities=inequalities, prefix="kkt_",
        big_m_primal=big_m_primal, big_m_dual=big_m_dual)
    return KktSystem(mb.build(), block, dict(lp.objective), lp.objective_constant)


def check_big_m_slack(block: KktBlock, values: dict[str, float],
                      tol: float = BINDING_TOL, check_duals: bool = True) -> None:
    """Raise if any complementarity Big-M bound is (near-)binding.

    ``check_duals=False`` restricts the check to the primal slack side; LP
    duals are degenerate in general, so inside a larger model a dual sitting
    at its Big-M may be a benign vertex choice rather than a too-small
    constant (there the per-cut objective comparison is the sound check).
    """
    for k, con in enumerate(block.inequalities):
        if check_duals:
            nu = values[block.ineq_dual_names[k]]
            if nu >= block.big_m_dual - tol:
                raise KktBigMBindingError(
                    f"dual {block.ineq_dual_names[k]} = {nu:.6g} binds Big-M "
                    f"{block.big_m_dual:g}; increase big_m_dual")
        slack = con.rhs - sum(coef * values[name]
                              for name, coef in con.coeffs.items())
        if slack >= block.big_m_primal - tol:
            raise KktBigMBindingError(
                f"slack of {con.name!r} = {slack:.6g} binds Big-M "
                f"{block.big_m_primal:g}; increase big_m_primal")


def solve_kkt_system(kkt: KktSystem, gap: float = 1e-9,
                     objective: dict[str, float] | None = None,
                     time_limit: float | None = None,
                     backend: str = "highs") -> tuple[SolveResult, float]:
    """Solve the KKT feasibility MIP and return (result, LP objective value).

    Any feasible point of the system is LP-optimal in the primal variables.
    The solver's finite integrality tolerance is amplified by the Big-M
    constants, so the indicator pattern is rounded and the system re-solved
    as an LP: the returned point satisfies complementarity exactly.  The
    Big-M binding check runs on every solve.
    """
    model = LinearModel(kkt.model.variables, kkt.model.constraints,
                        dict(objective or {}), 0.0)
    result = solve(model, gap=gap, time_limit=time_limit, backend=backend)
    if not result.values:
        return result, math.nan
    assignment = {name: float(round(result.values[name]))
                  for name in kkt.block.indicator_names}
    # with the indicators fixed the system is an LP, so complementarity is
    # exact; LP duals are degenerate in general, so among the valid duals
    # the minimal-norm one is selected, which keeps the Big-M binding check
    # from flagging an arbitrary vertex choice
    repair_objective = dict(objective) if objective is not None else \
        {name: 1.0 for name in kkt.block.ineq_dual_names}
    repair = LinearModel(kkt.model.variables, kkt.model.constraints,
                         repair_objective, 0.0)
    repaired = solve(fix_binaries(repair, assignment), gap=gap,
                     time_limit=time_limit, backend=backend)
    if not repaired.values:
        raise KktBigMBindingError(
            "indicator rounding left the KKT system infeasible; the solver's "
            "integrality slack interacted with the Big-M constants")
    values = dict(repaired.values)
    values.update(assignment)
    result = SolveResult(result.status, values,
                         repaired.objective, result.gap)
    check_big_m_slack(kkt.block, result.values)
    return result, kkt.objective_value(result.values)
