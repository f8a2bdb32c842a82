"""Bilevel training of cost-oriented predictors by column-and-constraint
generation.

The empirical risk is the average actual system cost over training days: the
commitment stage runs on the tailored predictions, the dispatch stage on the
realizations, and the predictor coefficients are chosen to minimize the
resulting cost (plus an L1 tilt on the coefficients).  The bilevel program is
solved iteratively:

* SP1 solves the commitment problem under the incumbent predictors and
  reveals the anticipated cost;
* SP2 re-solves commitment jointly with dispatch under an anticipated-cost
  cap, picking the commitment pattern most favorable to actual cost among
  the (near-)optimal ones;
* the master carries duplicated commitment/dispatch blocks per scenario plus,
  for every enumerated pattern, a KKT block certifying that pattern's
  fixed-binary LP optimum, and an objective cut tying the duplicated plan's
  anticipated cost to it.

Bounds: the evaluated incumbent gives the upper bound, the master's proven
dual bound the lower bound; the loop stops at the target gap or the
iteration limit.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .kkt import append_kkt_conditions, check_big_m_slack
from .milp import (
    EQUAL,
    LESS_EQUAL,
    Constraint,
    LinearModel,
    ModelBuilder,
    SolveResult,
    SolveStatus,
    fix_binaries,
    solve,
)
from .operation import (
    CommitmentPlan,
    LinExpr,
    Penalties,
    UcVars,
    _uc_names,
    add_ed_block,
    add_uc_block,
    build_ed,
    build_uc,
    const_column,
    const_grid,
    extract_outcome,
    extract_plan,
    uc_objective_terms,
    uc_rows,
)
from .predictors import (
    RESERVE_SPLIT,
    AffinePredictorPair,
    identity_pair,
    predict_res,
    predict_reserve,
)
from .scenarios import OperationScenario
from .system import PowerSystem, ValidationError


class TrainingInstanceError(RuntimeError):
    """A scenario's commitment subproblem is infeasible under the incumbent."""


class Sp2ToleranceError(RuntimeError):
    """SP2 infeasible: the anticipated-cost cap collides with the solver gap."""


class CcgError(RuntimeError):
    """Internal-consistency failure of the bound loop; carries a state dump."""

    def __init__(self, message: str, state: "CcgState | None" = None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class TrainingConfig:
    lambda_w: float = 1e6
    lambda_r: float = 1e6
    gap_target: float = 0.01
    max_iterations: int = 30
    big_m_primal: float = 1e5
    big_m_dual: float = 1e5
    solver_gap: float = 0.01
    time_limit: float | None = None
    sp2_tolerance: float | None = None
    reserve_mode: str = RESERVE_SPLIT
    train_res: bool = True
    train_reserve: bool = True
    penalties: Penalties = Penalties()
    alpha: float = 0.5

    def validate(self) -> None:
        if self.gap_target <= 0:
            raise ValidationError("gap_target must be > 0")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")


@dataclass(frozen=True)
class BinaryPattern:
    """One enumerated commitment pattern: integral (T, |I|) status arrays."""

    commit: np.ndarray
    startup: np.ndarray
    shutdown: np.ndarray
    nr_commit: np.ndarray

    def assignment(self, uv: UcVars) -> dict[str, float]:
        out: dict[str, float] = {}
        for grid, arr in ((uv.commit, self.commit), (uv.startup, self.startup),
                          (uv.shutdown, self.shutdown),
                          (uv.nr_commit, self.nr_commit)):
            for t, row in enumerate(grid):
                for i, name in enumerate(row):
                    out[name] = float(arr[t, i])
        return out

    def commitment_cost(self, system: PowerSystem) -> float:
        return float(sum(u.startup_cost * self.startup[:, i].sum()
                         + u.noload_cost * self.commit[:, i].sum()
                         for i, u in enumerate(system.thermal_units)))


@dataclass
class CcgIteration:
    iteration: int
    lower_bound: float
    upper_bound: float
    gap: float
    wall_seconds: float
    cuts_total: int


@dataclass
class CcgState:
    """Progress of the cut loop: bounds, enumerated patterns, incumbent."""

    iteration: int = 0
    lower_bound: float = -math.inf
    upper_bound: float = math.inf
    cuts: list[list[BinaryPattern]] = field(default_factory=list)
    incumbent: AffinePredictorPair | None = None
    history: list[CcgIteration] = field(default_factory=list)
    converged: bool = False
    limit_reached: bool = False

    def cuts_total(self) -> int:
        return sum(len(c) for c in self.cuts)

    def log_rows(self) -> list[dict[str, float]]:
        return [{"iteration": h.iteration, "lower_bound": h.lower_bound,
                 "upper_bound": h.upper_bound, "gap": h.gap,
                 "wall_seconds": h.wall_seconds, "cuts_total": h.cuts_total}
                for h in self.history]


def _tailored_inputs(pair: AffinePredictorPair, scenario: OperationScenario,
                     use_res: bool = True, use_reserve: bool = True
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Commitment inputs under the incumbent; an untrained side passes its
    raw value through, matching the master's constant references."""
    res = (predict_res(pair, scenario.features_res) if use_res
           else scenario.raw_res_prediction)
    reserve = (predict_reserve(pair, scenario.features_reserve) if use_reserve
               else scenario.raw_reserve)
    return res, reserve


def _same_pattern(a: BinaryPattern, b: BinaryPattern) -> bool:
    return (np.array_equal(a.commit, b.commit)
            and np.array_equal(a.startup, b.startup)
            and np.array_equal(a.shutdown, b.shutdown)
            and np.array_equal(a.nr_commit, b.nr_commit))


def solve_sp1(system: PowerSystem, scenario: OperationScenario,
              pair: AffinePredictorPair, *, gap: float = 1e-6,
              time_limit: float | None = None, use_res: bool = True,
              use_reserve: bool = True) -> tuple[float, CommitmentPlan]:
    """Commitment under the incumbent predictors; anticipated cost and plan."""
    res_pred, reserve_pred = _tailored_inputs(pair, scenario, use_res,
                                              use_reserve)
    model, uv = build_uc(system, res_pred, reserve_pred,
                         scenario.raw_load_prediction)
    result = solve(model, gap=gap, time_limit=time_limit)
    if result.status == SolveStatus.INFEASIBLE:
        raise TrainingInstanceError(
            f"scenario {scenario.id}: commitment infeasible under incumbent "
            f"predictors (reserve demand may exceed capacity)")
    plan = extract_plan(system, uv, result)
    return plan.anticipated_cost, plan


def solve_sp2(system: PowerSystem, scenario: OperationScenario,
              pair: AffinePredictorPair, anticipated_cost: float, *,
              sp2_tolerance: float | None = None,
              penalties: Penalties = Penalties(), gap: float = 1e-6,
              time_limit: float | None = None, use_res: bool = True,
              use_reserve: bool = True) -> tuple[float, BinaryPattern]:
    """Optimistic tie-break: joint commitment+dispatch under a cost cap.

    Returns the actual cost and the selected commitment pattern for cut
    generation.
    """
    res_pred, reserve_pred = _tailored_inputs(pair, scenario, use_res,
                                              use_reserve)
    tol = sp2_tolerance if sp2_tolerance is not None else max(
        1.0, gap * abs(anticipated_cost))
    mb = ModelBuilder()
    uv = add_uc_block(
        mb, system, "uc_", scenario.raw_load_prediction,
        const_grid(res_pred) if system.n_res else
        [[] for _ in range(system.horizon_hours)],
        const_column(reserve_pred[:, 0]), const_column(reserve_pred[:, 1]),
        obj_commit_weight=1.0, obj_generation_weight=0.0)
    ev = add_ed_block(mb, system, "ed_", uv, scenario.actual_res,
                      scenario.actual_load, penalties, obj_weight=1.0)
    cap = dict(uv.b_terms)
    for name, coef in uv.c_terms.items():
        cap[name] = cap.get(name, 0.0) + coef
    mb.constr(cap, LESS_EQUAL, anticipated_cost + tol, "anticipated_cap")
    result = solve(mb.build(), gap=gap, time_limit=time_limit)
    if result.status == SolveStatus.INFEASIBLE:
        raise Sp2ToleranceError(
            f"scenario {scenario.id}: tie-break infeasible at cap "
            f"{anticipated_cost + tol}; raise sp2_tolerance above the solver gap")
    n = system.n_thermal
    t_hours = system.horizon_hours
    grab = lambda grid: np.array(
        [[result.binary(grid[t][i]) for i in range(n)] for t in range(t_hours)],
        dtype=float)
    pattern = BinaryPattern(grab(uv.commit), grab(uv.startup),
                            grab(uv.shutdown), grab(uv.nr_commit))
    actual = (sum(coef * result.values[name] for name, coef in uv.b_terms.items())
              + sum(coef * result.values[name] for name, coef in ev.d_terms.items()))
    return float(actual), pattern


def _reserve_refs(n_names: list[list[str]] | None, features: np.ndarray,
                  reserve_mode: str, raw: np.ndarray
                  ) -> tuple[list[LinExpr], list[LinExpr]]:
    """Hourly (SR, NR) requirement references over the coefficient variables."""
    t_hours = features.shape[0]
    if n_names is None:
        return const_column(raw[:, 0]), const_column(raw[:, 1])
    sr: list[LinExpr] = []
    nr: list[LinExpr] = []
    for t in range(t_hours):
        w_agg, l_agg = float(features[t, 0]), float(features[t, 1])
        if reserve_mode == RESERVE_SPLIT:
            half = ({n_names[t][0]: w_agg / 2.0, n_names[t][1]: l_agg / 2.0}, 0.0)
            sr.append(half)
            nr.append(half)
        else:
            sr.append(({n_names[t][0]: w_agg, n_names[t][1]: l_agg}, 0.0))
            nr.append(({n_names[t][2]: w_agg, n_names[t][3]: l_agg}, 0.0))
    return sr, nr


def _res_refs(m_names: list[list[str]] | None, features: np.ndarray,
              raw: np.ndarray) -> list[list[LinExpr]]:
    if m_names is None:
        return const_grid(raw) if raw.size else [[] for _ in range(raw.shape[0])]
    return [[({m_names[t][j]: float(features[t, j])}, 0.0)
             for j in range(features.shape[1])]
            for t in range(features.shape[0])]


def _substituted_rows(rows: list[Constraint], values: dict[str, float]
                      ) -> tuple[list[Constraint], list[Constraint]]:
    """Fold constants into rows; returns (equalities, inequalities).

    Rows reduced to pure constants are checked and dropped; a violated
    constant row means the pattern is inconsistent with the block.
    """
    equalities: list[Constraint] = []
    inequalities: list[Constraint] = []
    for row in rows:
        coeffs: dict[str, float] = {}
        rhs = row.rhs
        for name, coef in row.coeffs.items():
            if name in values:
                rhs -= coef * values[name]
            else:
                coeffs[name] = coef
        if not coeffs:
            ok = abs(rhs) <= 1e-7 if row.sense == EQUAL else rhs >= -1e-7
            if not ok:
                raise CcgError(f"pattern violates constraint {row.name!r}")
            continue
        target = equalities if row.sense == EQUAL else inequalities
        target.append(Constraint(coeffs, row.sense, rhs, row.name))
    return equalities, inequalities


@dataclass
class MasterHandles:
    m_names: list[list[str]] | None
    n_names: list[list[str]] | None
    dup_blocks: list[UcVars]
    kkt_blocks: list
    objective_scale: float


def build_master(system: PowerSystem, scenarios: list[OperationScenario],
                 cuts: list[list[BinaryPattern]], config: TrainingConfig
                 ) -> tuple[LinearModel, MasterHandles]:
    """Assemble the master problem over all scenarios and enumerated cuts."""
    if not any(cuts):
        raise ValidationError("master needs at least one enumerated pattern")
    t_hours = system.horizon_hours
    n_scen = len(scenarios)
    mb = ModelBuilder()

    m_names = None
    if config.train_res and system.n_res:
        # a tailored prediction above the hour's total predicted load is
        # saturated (the schedule cap cannot bind past the balance), so the
        # multiplier is bounded at its last effective value; this keeps
        # constraint slacks far below the Big-M constants
        m_bounds = np.full((t_hours, system.n_res), 1.0)
        for scenario in scenarios:
            load_total = scenario.raw_load_prediction.sum(axis=1)
            features = scenario.features_res
            for t in range(t_hours):
                for j in range(system.n_res):
                    if features[t, j] > 1e-9:
                        m_bounds[t, j] = max(m_bounds[t, j],
                                             load_total[t] / features[t, j])
        m_names = [[mb.var(f"m[{t},{j}]", 0.0, float(m_bounds[t, j]))
                    for j in range(system.n_res)] for t in range(t_hours)]
    n_names = None
    if config.train_reserve:
        n_cols = 2 if config.reserve_mode == RESERVE_SPLIT else 4
        n_names = [[mb.var(f"n[{t},{c}]", 0.0, math.inf) for c in range(n_cols)]
                   for t in range(t_hours)]

    dup_blocks: list[UcVars] = []
    kkt_blocks = []
    weight = 1.0 / n_scen
    for s, scenario in enumerate(scenarios):
        res_refs = _res_refs(m_names, scenario.features_res,
                             scenario.raw_res_prediction)
        sr_refs, nr_refs = _reserve_refs(n_names, scenario.features_reserve,
                                         config.reserve_mode, scenario.raw_reserve)
        dup = add_uc_block(mb, system, f"s{s}_uc_",
                           scenario.raw_load_prediction, res_refs, sr_refs,
                           nr_refs, obj_commit_weight=weight,
                           obj_generation_weight=0.0)
        add_ed_block(mb, system, f"s{s}_ed_", dup, scenario.actual_res,
                     scenario.actual_load, config.penalties, obj_weight=weight)
        dup_blocks.append(dup)

        for e, pattern in enumerate(cuts[s]):
            prefix = f"s{s}_e{e}_"
            gv = _uc_names(system, prefix)
            for name in gv.continuous():
                mb.var(name, -math.inf, math.inf)
            rows = uc_rows(system, gv, scenario.raw_load_prediction,
                           res_refs, sr_refs, nr_refs)
            equalities, inequalities = _substituted_rows(
                rows, pattern.assignment(gv))
            for name in gv.continuous():
                inequalities.append(Constraint({name: -1.0}, LESS_EQUAL, 0.0,
                                               f"{prefix}lb[{name}]"))
            _, c_terms = uc_objective_terms(system, gv)
            block = append_kkt_conditions(
                mb, lp_var_names=gv.continuous(), lp_objective=c_terms,
                equalities=equalities, inequalities=inequalities,
                prefix=f"{prefix}kkt_", big_m_primal=config.big_m_primal,
                big_m_dual=config.big_m_dual)
            kkt_blocks.append((s, e, c_terms, block))
            # anticipated cost of the duplicated plan may not exceed the
            # enumerated pattern's certified optimum
            cut = dict(dup.b_terms)
            for name, coef in dup.c_terms.items():
                cut[name] = cut.get(name, 0.0) + coef
            for name, coef in c_terms.items():
                cut[name] = cut.get(name, 0.0) - coef
            mb.constr(cut, LESS_EQUAL, pattern.commitment_cost(system),
                      f"{prefix}objective_cut")

    if m_names is not None:
        mb.add_objective({name: config.lambda_w
                          for row in m_names for name in row})
    if n_names is not None:
        mb.add_objective({name: -config.lambda_r
                          for row in n_names for name in row})
    return mb.build(), MasterHandles(m_names, n_names, dup_blocks, kkt_blocks,
                                     weight)


def _pair_from_master(system: PowerSystem, handles: MasterHandles,
                      result: SolveResult, config: TrainingConfig,
                      horizon: int) -> AffinePredictorPair:
    base = identity_pair(horizon, system.n_res, config.alpha,
                         config.reserve_mode)
    res = np.array([[result.values[name] for name in row]
                    for row in handles.m_names]) if handles.m_names else base.res
    reserve = np.array([[result.values[name] for name in row]
                        for row in handles.n_names]) if handles.n_names else base.reserve
    # solver slack can leave coefficients a hair negative
    return AffinePredictorPair(np.maximum(np.asarray(res, dtype=float), 0.0),
                               np.maximum(np.asarray(reserve, dtype=float), 0.0),
                               config.reserve_mode)


def _regularizer(pair: AffinePredictorPair, config: TrainingConfig) -> float:
    value = 0.0
    if config.train_res:
        value += config.lambda_w * float(pair.res.sum())
    if config.train_reserve:
        value -= config.lambda_r * float(pair.reserve.sum())
    return value


def verify_cut_blocks(system: PowerSystem, scenarios: list[OperationScenario],
                      cuts: list[list[BinaryPattern]], handles: MasterHandles,
                      result: SolveResult, pair: AffinePredictorPair,
                      state: "CcgState | None" = None,
                      rel_tol: float = 1e-5,
                      config: TrainingConfig | None = None) -> None:
    """Check every KKT block's soundness against a direct fixed-binary solve.

    The generated variables of each enumerated pattern must reproduce that
    pattern's LP optimum under the master's predictions; a mismatch means
    the Big-M linearization corrupted the block.  The primal-slack side of
    every Big-M pair is checked as well.
    """
    for s, e, c_terms, block in handles.kkt_blocks:
        check_big_m_slack(block, result.values, check_duals=False)
        scenario = scenarios[s]
        res_pred, reserve_pred = _tailored_inputs(
            pair, scenario,
            config.train_res if config is not None else True,
            config.train_reserve if config is not None else True)
        model, uv = build_uc(system, res_pred, reserve_pred,
                             scenario.raw_load_prediction)
        lp = fix_binaries(model, cuts[s][e].assignment(uv))
        direct = solve(lp, gap=1e-9)
        if direct.status != SolveStatus.OPTIMAL:
            raise CcgError(
                f"cut ({s}, {e}): fixed-binary LP {direct.status} under the "
                f"master predictions", state)
        generated = cuts[s][e].commitment_cost(system) + sum(
            coef * result.values[name] for name, coef in c_terms.items())
        if abs(generated - direct.objective) > rel_tol * max(
                1.0, abs(direct.objective)):
            raise CcgError(
                f"cut ({s}, {e}): generated block cost {generated:.6f} != "
                f"direct LP optimum {direct.objective:.6f}; Big-M constants "
                f"may be too small", state)


def train(system: PowerSystem, scenarios: list[OperationScenario],
          config: TrainingConfig = TrainingConfig()
          ) -> tuple[AffinePredictorPair, CcgState]:
    """Run the cut loop; returns the trained pair and the bound history.

    Returns the incumbent that certified convergence, or the best evaluated
    pair when the iteration limit is reached (flagged on the state).
    """
    config.validate()
    if not scenarios:
        raise ValidationError("training needs at least one scenario")
    horizon = system.horizon_hours
    for sc in scenarios:
        if sc.horizon != horizon:
            raise ValidationError(f"scenario {sc.id}: horizon != system horizon")

    state = CcgState(cuts=[[] for _ in scenarios])
    pair = identity_pair(horizon, system.n_res, config.alpha, config.reserve_mode)
    best_pair = pair
    started = time.monotonic()
    lb_tol = 1e-6

    while True:
        actual_costs = []
        patterns = []
        for scenario in scenarios:
            anticipated, _ = solve_sp1(system, scenario, pair,
                                       gap=config.solver_gap,
                                       time_limit=config.time_limit,
                                       use_res=config.train_res,
                                       use_reserve=config.train_reserve)
            actual, pattern = solve_sp2(system, scenario, pair, anticipated,
                                        sp2_tolerance=config.sp2_tolerance,
                                        penalties=config.penalties,
                                        gap=config.solver_gap,
                                        time_limit=config.time_limit,
                                        use_res=config.train_res,
                                        use_reserve=config.train_reserve)
            actual_costs.append(actual)
            patterns.append(pattern)
        candidate = float(np.mean(actual_costs)) + _regularizer(pair, config)
        if candidate < state.upper_bound:
            state.upper_bound = candidate
            best_pair = pair

        denom = abs(state.upper_bound)
        gap = math.inf if not math.isfinite(state.lower_bound) else (
            (state.upper_bound - state.lower_bound) / max(denom, 1e-9))
        state.history.append(CcgIteration(
            state.iteration, state.lower_bound, state.upper_bound, gap,
            time.monotonic() - started, state.cuts_total()))

        if gap <= config.gap_target:
            state.converged = True
            state.incumbent = pair
            break
        if state.iteration >= config.max_iterations:
            state.limit_reached = True
            state.incumbent = best_pair
            break

        added = 0
        for s, pattern in enumerate(patterns):
            if not any(_same_pattern(pattern, seen) for seen in state.cuts[s]):
                state.cuts[s].append(pattern)
                added += 1
        if added == 0:
            # every selected pattern is already enumerated: the master cannot
            # move, so further iterations would only repeat themselves
            state.limit_reached = True
            state.incumbent = best_pair
            break
        model, handles = build_master(system, scenarios, state.cuts, config)
        result = solve(model, gap=config.solver_gap,
                       time_limit=config.time_limit)
        if result.status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED):
            raise CcgError(f"master problem {result.status} at iteration "
                           f"{state.iteration}", state)
        if not result.values:
            raise CcgError("master hit its limit with no incumbent; raise "
                           "the time limit or loosen the solver gap", state)
        new_pair = _pair_from_master(system, handles, result, config, horizon)
        verify_cut_blocks(system, scenarios, state.cuts, handles, result,
                          new_pair, state, config=config)
        new_lb = result.best_bound
        if new_lb is None:
            raise CcgError("master solve returned no dual bound", state)
        if new_lb < state.lower_bound - max(lb_tol, config.solver_gap
                                            * abs(state.lower_bound)):
            raise CcgError(
                f"lower bound regressed from {state.lower_bound} to {new_lb}",
                state)
        state.lower_bound = max(state.lower_bound, new_lb)
        pair = new_pair
        state.iteration += 1

    meta = {
        "iterations": state.iteration,
        "lambda_w": config.lambda_w,
        "lambda_r": config.lambda_r,
        "objective": state.upper_bound,
        "converged": state.converged,
        "scenario_ids": [sc.id for sc in scenarios],
    }
    final = replace(state.incumbent, metadata=meta)
    state.incumbent = final
    return final, state


# ---------------------------------------------------------------------------
# brute-force equivalence oracle


class Prop1InstanceError(ValueError):
    """Instance too large or not reserve-free; enumeration would be unsound."""


@dataclass
class Prop1Report:
    brute_objective: float
    trained_objective: float
    relative_gap: float
    grid_best: float
    table: list[tuple[float, float]]
    passed: bool


def _unit_patterns(unit, t_hours: int) -> list[tuple[np.ndarray, ...]]:
    """All consistent (I, U, D, O) paths of one unit over the horizon."""
    out = []
    i0 = 1.0 if unit.initial_status.committed else 0.0
    for commits in itertools.product((0.0, 1.0), repeat=t_hours):
        startup = np.zeros(t_hours)
        shutdown = np.zeros(t_hours)
        prev = i0
        ok = True
        for t, now in enumerate(commits):
            if now - prev > 0:
                startup[t] = 1.0
            elif now - prev < 0:
                shutdown[t] = 1.0
            prev = now
        # truncated minimum up/down windows
        commit = np.array(commits)
        for t in range(t_hours):
            if startup[max(0, t - unit.min_up + 1):t + 1].sum() > commit[t]:
                ok = False
            if shutdown[max(0, t - unit.min_down + 1):t + 1].sum() > 1 - commit[t]:
                ok = False
        if not ok:
            continue
        o_choices = (itertools.product((0.0, 1.0), repeat=t_hours)
                     if unit.quick_start else [(0.0,) * t_hours])
        for o_path in o_choices:
            o = np.array(o_path)
            if np.any(o + commit > 1):
                continue
            out.append((commit, startup, shutdown, o))
    return out


def enumerate_patterns(system: PowerSystem, cap: int = 4096
                       ) -> list[BinaryPattern]:
    """Every consistent commitment pattern of a tiny system."""
    t_hours = system.horizon_hours
    per_unit = [_unit_patterns(u, t_hours) for u in system.thermal_units]
    total = math.prod(len(p) for p in per_unit)
    if total > cap:
        raise Prop1InstanceError(
            f"{total} commitment patterns exceed the cap of {cap}")
    patterns = []
    for combo in itertools.product(*per_unit):
        stack = lambda k: np.column_stack([c[k] for c in combo])
        patterns.append(BinaryPattern(stack(0), stack(1), stack(2), stack(3)))
    return patterns


def _evaluate_pattern(system: PowerSystem, scenario: OperationScenario,
                      model: LinearModel, uv: UcVars, pattern: BinaryPattern,
                      penalties: Penalties) -> tuple[float, float] | None:
    """(anticipated, actual) costs of one pattern, or None if infeasible."""
    lp = fix_binaries(model, pattern.assignment(uv))
    lp_result = solve(lp, gap=1e-9)
    if lp_result.status != SolveStatus.OPTIMAL:
        return None
    merged = dict(lp_result.values)
    merged.update(pattern.assignment(uv))
    full = SolveResult(SolveStatus.OPTIMAL, merged, lp_result.objective, 0.0)
    plan = extract_plan(system, uv, full)
    ed_model, ev = build_ed(system, plan, scenario.actual_res,
                            scenario.actual_load, penalties)
    ed_result = solve(ed_model, gap=1e-9)
    outcome = extract_outcome(system, ev, ed_result, penalties)
    return lp_result.objective, pattern.commitment_cost(system) + outcome.ed_cost


def verify_proposition1(system: PowerSystem, scenarios: list[OperationScenario],
                        m_grid: np.ndarray, config: TrainingConfig, *,
                        pattern_cap: int = 4096, tolerance: float = 0.01
                        ) -> Prop1Report:
    """Brute-force the bilevel risk and compare with the cut-loop optimum.

    For every grid value of a uniform RES multiplier the oracle solves the
    commitment problem, enumerates every commitment pattern, keeps those
    whose fixed-binary LP ties the optimum, dispatches each and takes the
    optimistic (cheapest) actual cost.  The instance must be reserve-free so
    the reserve coefficients cannot move the optimum.
    """
    for u in system.thermal_units:
        if u.sr_max != 0.0 or u.nr_max != 0.0:
            raise Prop1InstanceError(
                "oracle instances must have zero reserve capability")
    for sc in scenarios:
        if np.any(sc.raw_reserve != 0.0):
            raise Prop1InstanceError("oracle scenarios must carry zero reserve")
    patterns = enumerate_patterns(system, pattern_cap)
    penalties = config.penalties

    table: list[tuple[float, float]] = []
    for m_value in np.asarray(m_grid, dtype=float):
        per_scenario = []
        for scenario in scenarios:
            res_pred = m_value * scenario.raw_res_prediction
            model, uv = build_uc(system, res_pred, scenario.raw_reserve,
                                 scenario.raw_load_prediction)
            mip = solve(model, gap=1e-9)
            if mip.status != SolveStatus.OPTIMAL:
                raise Prop1InstanceError(
                    f"grid point {m_value}: commitment infeasible")
            anticipated = mip.objective
            tie_tol = 1e-6 * max(1.0, abs(anticipated))
            best = math.inf
            for pattern in patterns:
                evaluated = _evaluate_pattern(system, scenario, model, uv,
                                              pattern, penalties)
                if evaluated is None:
                    continue
                lp_value, actual = evaluated
                if lp_value <= anticipated + tie_tol:
                    best = min(best, actual)
            per_scenario.append(best)
        objective = float(np.mean(per_scenario))
        if config.train_res:
            objective += config.lambda_w * m_value * system.n_res * system.horizon_hours
        table.append((float(m_value), objective))

    grid_best, brute = min(table, key=lambda row: row[1])
    _, state = train(system, scenarios, config)
    trained = state.upper_bound
    rel = abs(brute - trained) / max(abs(brute), 1e-9)
    return Prop1Report(brute, trained, rel, grid_best, table, rel <= tolerance)
