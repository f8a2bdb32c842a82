"""Solver-agnostic linear/mixed-integer model representation and solving.

Models are plain coefficient containers (no solver handles), so they can be
built, inspected, and serialized independently of the backend.  The default
backend is the HiGHS solver bundled with scipy; backends are registered by
name and selected per call.

Conventions fixed here and relied on elsewhere:

* every inequality is normalized internally to ``g(x) <= 0`` form, so the
  reported dual ``nu`` of an inequality is nonnegative;
* equality duals ``mu`` follow the Lagrangian sign convention
  ``c + A_eq' mu + A_ub' nu = 0``;
* one backend instance per solve call, no incremental modification.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

DEFAULT_GAP = 0.01
FEASIBILITY_TOL = 1e-6

LESS_EQUAL = "<="
GREATER_EQUAL = ">="
EQUAL = "=="
_SENSES = (LESS_EQUAL, GREATER_EQUAL, EQUAL)


class ModelError(ValueError):
    """A model violates its structural invariants."""


class SolverBackendError(RuntimeError):
    """The backend failed outside the normal status vocabulary."""


class SolveValidationError(RuntimeError):
    """A claimed-optimal solution violates feasibility tolerance."""


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    integer: bool = False


@dataclass(frozen=True)
class Constraint:
    coeffs: dict[str, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class LinearModel:
    """Minimization model: variables, linear constraints, linear objective."""

    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    objective_constant: float = 0.0

    def index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    def validate(self) -> None:
        idx = self.index()
        if len(idx) != len(self.variables):
            raise ModelError("duplicate variable name")
        for v in self.variables:
            if v.lb > v.ub:
                raise ModelError(f"variable {v.name}: lb {v.lb} > ub {v.ub}")
        for c in self.constraints:
            if c.sense not in _SENSES:
                raise ModelError(f"constraint {c.name!r}: bad sense {c.sense!r}")
            for name in c.coeffs:
                if name not in idx:
                    raise ModelError(
                        f"constraint {c.name!r} references undeclared variable {name!r}"
                    )
        for name, coef in self.objective.items():
            if name not in idx:
                raise ModelError(f"objective references undeclared variable {name!r}")
            if not math.isfinite(coef):
                raise ModelError(f"objective coefficient for {name!r} not finite")

    def integer_names(self) -> list[str]:
        return [v.name for v in self.variables if v.integer]


class ModelBuilder:
    """Incremental construction helper around :class:`LinearModel`."""

    def __init__(self) -> None:
        self._vars: list[Variable] = []
        self._index: dict[str, int] = {}
        self._constraints: list[Constraint] = []
        self._objective: dict[str, float] = {}
        self._constant = 0.0

    def var(self, name: str, lb: float = 0.0, ub: float = math.inf,
            integer: bool = False) -> str:
        if name in self._index:
            raise ModelError(f"variable {name!r} declared twice")
        self._index[name] = len(self._vars)
        self._vars.append(Variable(name, lb, ub, integer))
        return name

    def binary(self, name: str) -> str:
        return self.var(name, 0.0, 1.0, integer=True)

    def constr(self, coeffs: dict[str, float], sense: str, rhs: float,
               name: str = "") -> None:
        self._constraints.append(Constraint(dict(coeffs), sense, rhs, name))

    def add_objective(self, coeffs: dict[str, float], weight: float = 1.0) -> None:
        for k, v in coeffs.items():
            self._objective[k] = self._objective.get(k, 0.0) + weight * v

    def add_constant(self, value: float) -> None:
        self._constant += value

    def has(self, name: str) -> bool:
        return name in self._index

    def build(self) -> LinearModel:
        model = LinearModel(list(self._vars), list(self._constraints),
                            dict(self._objective), self._constant)
        model.validate()
        return model


class SolveStatus:
    OPTIMAL = "optimal-within-gap"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit-reached"


@dataclass
class SolveResult:
    status: str
    values: dict[str, float]
    objective: float | None
    gap: float | None
    # duals, populated for pure-LP solves only; inequality duals are for the
    # <=-normalized row (nonnegative), equality duals follow c + A'mu = 0
    eq_duals: dict[int, float] | None = None
    ineq_duals: dict[int, float] | None = None
    lower_bound_duals: dict[str, float] | None = None
    upper_bound_duals: dict[str, float] | None = None
    best_bound: float | None = None

    def value(self, name: str) -> float:
        return self.values[name]

    def binary(self, name: str) -> int:
        return int(round(self.values[name]))


def _assemble(model: LinearModel):
    """Split a model into scipy arrays: c, bounds, A_ub/b_ub, A_eq/b_eq.

    ``>=`` rows are negated into ``<=`` form; row maps record where each
    original constraint landed so duals can be reported per constraint.
    """
    idx = model.index()
    n = len(model.variables)
    c = np.zeros(n)
    for name, coef in model.objective.items():
        c[idx[name]] = coef
    lb = np.array([v.lb for v in model.variables])
    ub = np.array([v.ub for v in model.variables])

    ub_rows, ub_cols, ub_vals, b_ub, ub_map = [], [], [], [], []
    eq_rows, eq_cols, eq_vals, b_eq, eq_map = [], [], [], [], []
    for ci, con in enumerate(model.constraints):
        if con.sense == EQUAL:
            r = len(b_eq)
            for name, coef in con.coeffs.items():
                eq_rows.append(r)
                eq_cols.append(idx[name])
                eq_vals.append(coef)
            b_eq.append(con.rhs)
            eq_map.append(ci)
        else:
            sign = 1.0 if con.sense == LESS_EQUAL else -1.0
            r = len(b_ub)
            for name, coef in con.coeffs.items():
                ub_rows.append(r)
                ub_cols.append(idx[name])
                ub_vals.append(sign * coef)
            b_ub.append(sign * con.rhs)
            ub_map.append(ci)

    A_ub = sp.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(len(b_ub), n))
    A_eq = sp.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), n))
    return c, lb, ub, A_ub, np.array(b_ub), ub_map, A_eq, np.array(b_eq), eq_map


def _validate_primal(model: LinearModel, values: dict[str, float]) -> None:
    for con in model.constraints:
        lhs = sum(coef * values[name] for name, coef in con.coeffs.items())
        if con.sense == LESS_EQUAL:
            viol = lhs - con.rhs
        elif con.sense == GREATER_EQUAL:
            viol = con.rhs - lhs
        else:
            viol = abs(lhs - con.rhs)
        if viol > FEASIBILITY_TOL * max(1.0, abs(con.rhs)):
            raise SolveValidationError(
                f"constraint {con.name!r} violated by {viol:.3e} at claimed optimum"
            )


def export_lp_text(model: LinearModel) -> str:
    """Render the model in a human-readable LP-style text form (debugging)."""
    lines = ["minimize"]
    terms = [f"{coef:+g} {name}" for name, coef in sorted(model.objective.items())]
    if model.objective_constant:
        terms.append(f"{model.objective_constant:+g}")
    lines.append("  " + (" ".join(terms) if terms else "0"))
    lines.append("subject to")
    for i, con in enumerate(model.constraints):
        body = " ".join(f"{coef:+g} {name}" for name, coef in sorted(con.coeffs.items()))
        label = con.name or f"c{i}"
        lines.append(f"  {label}: {body or '0'} {con.sense} {con.rhs:g}")
    lines.append("bounds")
    for v in model.variables:
        kind = " integer" if v.integer else ""
        lines.append(f"  {v.lb:g} <= {v.name} <= {v.ub:g}{kind}")
    return "\n".join(lines) + "\n"


def _solve_scipy_highs(model: LinearModel, gap: float, time_limit: float | None,
                       dump_lp: str | None) -> SolveResult:
    c, lb, ub, A_ub, b_ub, ub_map, A_eq, b_eq, eq_map = _assemble(model)
    names = [v.name for v in model.variables]
    is_mip = any(v.integer for v in model.variables)
    if dump_lp:
        with open(dump_lp, "w") as fh:
            fh.write(export_lp_text(model))

    try:
        if is_mip:
            integrality = np.array([1 if v.integer else 0 for v in model.variables])
            constraints = []
            if b_ub.size:
                constraints.append(LinearConstraint(A_ub, -np.inf, b_ub))
            if b_eq.size:
                constraints.append(LinearConstraint(A_eq, b_eq, b_eq))
            # integrality slack multiplies into any Big-M row, so keep it far
            # below the default 1e-6
            options: dict = {"mip_rel_gap": gap,
                             "mip_feasibility_tolerance": 1e-9}
            if time_limit is not None:
                options["time_limit"] = time_limit
            with warnings.catch_warnings():
                warnings.filterwarnings(
                    "ignore", message="Unrecognized options detected")
                res = milp(c=c, integrality=integrality, bounds=Bounds(lb, ub),
                           constraints=constraints, options=options)
        else:
            options = {}
            if time_limit is not None:
                options["time_limit"] = time_limit
            res = linprog(c=c, A_ub=A_ub if b_ub.size else None,
                          b_ub=b_ub if b_ub.size else None,
                          A_eq=A_eq if b_eq.size else None,
                          b_eq=b_eq if b_eq.size else None,
                          bounds=np.column_stack([lb, ub]),
                          method="highs", options=options)
    except Exception as exc:  # scipy raises on malformed input, not infeasibility
        raise SolverBackendError(f"highs backend failure: {exc}") from exc

    if res.status == 2:
        return SolveResult(SolveStatus.INFEASIBLE, {}, None, None)
    if res.status == 3:
        return SolveResult(SolveStatus.UNBOUNDED, {}, None, None)
    if res.status == 4:
        raise SolverBackendError(f"highs numerical failure: {res.message}")
    if res.status == 1 and res.x is None:
        return SolveResult(SolveStatus.LIMIT, {}, None, None,
                           best_bound=_mip_bound(res, model))
    if res.x is None:
        raise SolverBackendError(f"highs returned no solution: {res.message}")

    values = dict(zip(names, (float(x) for x in res.x)))
    objective = float(res.fun) + model.objective_constant
    status = SolveStatus.LIMIT if res.status == 1 else SolveStatus.OPTIMAL
    result = SolveResult(status, values, objective, None)
    if is_mip:
        result.gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
        result.best_bound = _mip_bound(res, model)
        _polish_mip_incumbent(model, result)
    else:
        result.gap = 0.0
        result.best_bound = objective
        result.eq_duals = {eq_map[r]: -float(m)
                           for r, m in enumerate(res.eqlin.marginals)}
        result.ineq_duals = {ub_map[r]: -float(m)
                             for r, m in enumerate(res.ineqlin.marginals)}
        result.lower_bound_duals = dict(zip(names, (float(m) for m in res.lower.marginals)))
        result.upper_bound_duals = dict(zip(names, (-float(m) for m in res.upper.marginals)))
    if status == SolveStatus.OPTIMAL:
        _validate_primal(model, result.values)
    return result


def _mip_bound(res, model: LinearModel) -> float | None:
    bound = getattr(res, "mip_dual_bound", None)
    if bound is None:
        return None
    return float(bound) + model.objective_constant


def _polish_mip_incumbent(model: LinearModel, result: SolveResult) -> None:
    """Re-optimize the continuous part of a MIP incumbent at its rounded
    integer pattern.

    HiGHS presolve has been observed returning incumbents whose continuous
    part is suboptimal for their own integer assignment (and certifying
    them optimal), so every MIP solve is polished with one LP: the returned
    solution is then exactly integral and continuous-optimal, and the dual
    bound is clamped so it never exceeds a known-feasible objective.
    """
    assignment = {v.name: float(round(result.values[v.name]))
                  for v in model.variables if v.integer}
    if len(assignment) == len(model.variables):
        return
    lp_result = _solve_scipy_highs(fix_binaries(model, assignment),
                                   gap=0.0, time_limit=None, dump_lp=None)
    if lp_result.status != SolveStatus.OPTIMAL:
        return
    # repair only on strict improvement: on exact ties the solver's own
    # vertex is kept, so degenerate optima are not silently re-shuffled
    if lp_result.objective < result.objective \
            - FEASIBILITY_TOL * max(1.0, abs(result.objective)):
        result.values = dict(lp_result.values)
        result.values.update(assignment)
        result.objective = lp_result.objective
    if result.best_bound is not None:
        result.best_bound = min(result.best_bound, result.objective)


_BACKENDS = {"highs": _solve_scipy_highs}


def solve(model: LinearModel, gap: float = DEFAULT_GAP,
          time_limit: float | None = None, backend: str = "highs",
          dump_lp: str | None = None) -> SolveResult:
    """Solve a model with the named backend.

    ``gap`` is the relative MIP optimality gap; LPs are solved to optimality.
    Backend failures raise :class:`SolverBackendError`; they are never folded
    into a solve status.
    """
    model.validate()
    try:
        fn = _BACKENDS[backend]
    except KeyError:
        raise SolverBackendError(f"unknown solver backend {backend!r}") from None
    return fn(model, gap, time_limit, dump_lp)


def fix_binaries(model: LinearModel, assignment: dict[str, float]) -> LinearModel:
    """Fold an integer-variable assignment into constants, returning a pure LP.

    The assignment must cover exactly the integer variables; fixed values are
    folded into constraint right-hand sides and the objective constant.
    """
    integer = set(model.integer_names())
    extra = set(assignment) - integer
    if extra:
        raise ModelError(f"assignment covers non-integer variables: {sorted(extra)}")
    missing = integer - set(assignment)
    if missing:
        raise ModelError(f"assignment missing integer variables: {sorted(missing)}")

    keep = [v for v in model.variables if v.name not in assignment]
    constraints = []
    for con in model.constraints:
        coeffs = {}
        rhs = con.rhs
        for name, coef in con.coeffs.items():
            if name in assignment:
                rhs -= coef * assignment[name]
            else:
                coeffs[name] = coef
        constraints.append(Constraint(coeffs, con.sense, rhs, con.name))
    objective = {}
    constant = model.objective_constant
    for name, coef in model.objective.items():
        if name in assignment:
            constant += coef * assignment[name]
        else:
            objective[name] = coef
    fixed = LinearModel(keep, constraints, objective, constant)
    fixed.validate()
    return fixed
