"""Evaluation pipelines, stochastic baseline, and economics metrics.

Every method reduces to the same inner loop: commit on some prediction,
dispatch against the realization, account the actual cost.  The methods
differ only in where the prediction comes from: raw (open loop), tailored by
trained predictors (prescriptive), the realization itself (perfect
information), or hedged over a scenario set (two-stage stochastic).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .milp import ModelBuilder, SolveStatus, solve
from .operation import (
    CommitmentPlan,
    CostReport,
    Penalties,
    UcInfeasibleError,
    add_ed_block,
    add_uc_block,
    build_ed,
    build_uc,
    const_column,
    const_grid,
    extract_outcome,
    extract_plan,
)
from .predictors import AffinePredictorPair, predict_res, predict_reserve
from .scenarios import OperationScenario
from .system import PowerSystem, ValidationError


class MetricError(ValueError):
    """A metric's denominator vanished; message names the metric."""


@dataclass
class EvaluationRecord:
    """One day's outcome under one method."""

    day: str
    method: str
    report: CostReport
    res_prediction: np.ndarray
    reserve_prediction: np.ndarray
    sr_scheduled: np.ndarray
    nr_scheduled: np.ndarray
    input_hash: str

    @property
    def actual_cost(self) -> float:
        return self.report.actual_system_cost


def _input_hash(method: str, scenario: OperationScenario,
                res_pred: np.ndarray, reserve_pred: np.ndarray,
                penalties: Penalties) -> str:
    digest = hashlib.sha256()
    digest.update(method.encode())
    digest.update(scenario.id.encode())
    for arr in (res_pred, reserve_pred, scenario.actual_res,
                scenario.actual_load):
        digest.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    digest.update(f"{penalties.shed},{penalties.surplus},{penalties.branch}".encode())
    return digest.hexdigest()[:16]


def run_method(system: PowerSystem, scenario: OperationScenario, method: str,
               res_prediction: np.ndarray, reserve_prediction: np.ndarray,
               penalties: Penalties = Penalties(), *, gap: float = 0.01,
               plan: CommitmentPlan | None = None) -> EvaluationRecord:
    """Commit on the given predictions, dispatch on the realization, record.

    A pre-computed ``plan`` (e.g. from the stochastic model) skips the
    commitment solve and is evaluated as-is.
    """
    res_prediction = np.asarray(res_prediction, dtype=float)
    reserve_prediction = np.asarray(reserve_prediction, dtype=float)
    if plan is None:
        model, uv = build_uc(system, res_prediction, reserve_prediction,
                             scenario.raw_load_prediction)
        result = solve(model, gap=gap)
        if result.status == SolveStatus.INFEASIBLE:
            raise UcInfeasibleError(
                f"{method}: commitment infeasible on day {scenario.id}")
        plan = extract_plan(system, uv, result)
    ed_model, ev = build_ed(system, plan, scenario.actual_res,
                            scenario.actual_load, penalties)
    ed_result = solve(ed_model, gap=gap)
    outcome = extract_outcome(system, ev, ed_result, penalties)
    report = CostReport(plan.uc_cost_startup, plan.uc_cost_noload,
                        outcome.ed_cost_startup, outcome.ed_cost_noload,
                        outcome.ed_cost_generation, outcome.ed_cost_slack)
    return EvaluationRecord(
        day=scenario.id, method=method, report=report,
        res_prediction=res_prediction, reserve_prediction=reserve_prediction,
        sr_scheduled=plan.sr.sum(axis=1), nr_scheduled=plan.nr.sum(axis=1),
        input_hash=_input_hash(method, scenario, res_prediction,
                               reserve_prediction, penalties))


def run_open_loop_record(system: PowerSystem, scenario: OperationScenario,
                         penalties: Penalties = Penalties(), *,
                         gap: float = 0.01, method: str = "O-PO"
                         ) -> EvaluationRecord:
    return run_method(system, scenario, method, scenario.raw_res_prediction,
                      scenario.raw_reserve, penalties, gap=gap)


def run_prescriptive_uc(system: PowerSystem, pair: AffinePredictorPair,
                        scenario: OperationScenario,
                        penalties: Penalties = Penalties(), *,
                        gap: float = 0.01, method: str = "C-PO",
                        use_res: bool = True, use_reserve: bool = True
                        ) -> EvaluationRecord:
    """Commitment with embedded trained predictors (tailored predictions).

    ``use_res`` / ``use_reserve`` select which tailored prediction replaces
    its raw counterpart, covering the reserve-only and RES-only variants.
    """
    res_pred = (predict_res(pair, scenario.features_res) if use_res
                else scenario.raw_res_prediction)
    reserve_pred = (predict_reserve(pair, scenario.features_reserve)
                    if use_reserve else scenario.raw_reserve)
    return run_method(system, scenario, method, res_pred, reserve_pred,
                      penalties, gap=gap)


def run_perfect(system: PowerSystem, scenario: OperationScenario,
                penalties: Penalties = Penalties(), *, gap: float = 0.01,
                method: str = "P-PO") -> EvaluationRecord:
    """Perfect RES information: the realization stands in for the raw
    prediction; reserves stay raw."""
    return run_method(system, scenario, method, scenario.actual_res,
                      scenario.raw_reserve, penalties, gap=gap)


# ---------------------------------------------------------------------------
# two-stage stochastic baseline


@dataclass(frozen=True)
class UncertaintyScenarioSet:
    """Joint RES/load realizations with probabilities summing to one."""

    res: np.ndarray    # (H, T, |J|)
    load: np.ndarray   # (H, T, |Q|)
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "res", np.asarray(self.res, dtype=float))
        object.__setattr__(self, "load", np.asarray(self.load, dtype=float))
        object.__setattr__(self, "probabilities",
                           np.asarray(self.probabilities, dtype=float))
        if self.res.shape[0] != self.load.shape[0] \
                or self.res.shape[0] != self.probabilities.shape[0]:
            raise ValidationError("scenario set dimensions disagree")
        if np.any(self.probabilities < 0):
            raise ValidationError("scenario probabilities must be >= 0")
        if not math.isclose(float(self.probabilities.sum()), 1.0,
                            rel_tol=0, abs_tol=1e-9):
            raise ValidationError(
                f"probabilities sum to {self.probabilities.sum()}, not 1")

    @property
    def size(self) -> int:
        return self.res.shape[0]

    def flattened(self) -> np.ndarray:
        h = self.size
        return np.column_stack([self.res.reshape(h, -1),
                                self.load.reshape(h, -1)])


def solve_tsp(system: PowerSystem, res_prediction: np.ndarray,
              load_prediction: np.ndarray, scenario_set: UncertaintyScenarioSet,
              penalties: Penalties = Penalties(), *, gap: float = 0.01,
              time_limit: float | None = None
              ) -> tuple[CommitmentPlan, float, str]:
    """Extensive-form two-stage stochastic commitment.

    First stage: the commitment model on the point forecast, reserve
    variables retained but the explicit adequacy rows dropped (reserve needs
    are implied by the recourse).  Second stage: one dispatch block per
    realization.  Returns the first-stage plan, the objective, and the solve
    status (an incumbent is returned when the limit is hit).
    """
    if scenario_set.size < 1:
        raise ValidationError("scenario set is empty")
    t_hours = system.horizon_hours
    mb = ModelBuilder()
    uv = add_uc_block(
        mb, system, "uc_", np.asarray(load_prediction, dtype=float),
        const_grid(np.asarray(res_prediction, dtype=float)) if system.n_res
        else [[] for _ in range(t_hours)],
        const_column(np.zeros(t_hours)), const_column(np.zeros(t_hours)),
        include_reserve_requirement=False)
    for h in range(scenario_set.size):
        add_ed_block(mb, system, f"h{h}_ed_", uv, scenario_set.res[h],
                     scenario_set.load[h], penalties,
                     obj_weight=float(scenario_set.probabilities[h]))
    result = solve(mb.build(), gap=gap, time_limit=time_limit)
    if result.status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED):
        raise UcInfeasibleError(f"stochastic commitment {result.status}")
    if not result.values:
        raise UcInfeasibleError(
            "stochastic commitment hit the time limit with no incumbent")
    plan = extract_plan(system, uv, result)
    return plan, float(result.objective), result.status


def tsp_objective_of_plan(system: PowerSystem, plan: CommitmentPlan,
                          scenario_set: UncertaintyScenarioSet,
                          penalties: Penalties = Penalties(), *,
                          gap: float = 1e-6) -> float:
    """Evaluate a fixed plan in the two-stage objective (testing oracle)."""
    total = plan.anticipated_cost
    for h in range(scenario_set.size):
        model, ev = build_ed(system, plan, scenario_set.res[h],
                             scenario_set.load[h], penalties)
        result = solve(model, gap=gap)
        outcome = extract_outcome(system, ev, result, penalties)
        total += float(scenario_set.probabilities[h]) * outcome.ed_cost
    return total


def generate_scenarios(res_bounds: tuple[np.ndarray, np.ndarray],
                       load_bounds: tuple[np.ndarray, np.ndarray],
                       count: int, seed: int) -> UncertaintyScenarioSet:
    """Latin hypercube sample within per-hour bounds.

    ``res_bounds`` is a pair of (T, |J|) arrays (low, high); likewise
    ``load_bounds`` for (T, |Q|).  Each flattened dimension is stratified
    into ``count`` equiprobable bins with one draw per bin.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    rng = np.random.default_rng(seed)
    res_lo, res_hi = (np.asarray(a, dtype=float) for a in res_bounds)
    load_lo, load_hi = (np.asarray(a, dtype=float) for a in load_bounds)
    lo = np.concatenate([res_lo.ravel(), load_lo.ravel()])
    hi = np.concatenate([res_hi.ravel(), load_hi.ravel()])
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)) or np.any(hi < lo):
        raise ValidationError("bounds must be finite with high >= low")
    dims = lo.size
    samples = np.empty((count, dims))
    for d in range(dims):
        strata = (rng.permutation(count) + rng.uniform(size=count)) / count
        samples[:, d] = lo[d] + strata * (hi[d] - lo[d])
    n_res = res_lo.size
    res = samples[:, :n_res].reshape((count,) + res_lo.shape)
    load = samples[:, n_res:].reshape((count,) + load_lo.shape)
    return UncertaintyScenarioSet(res, load, np.full(count, 1.0 / count))


def _assignment_cost(distances: np.ndarray, weights: np.ndarray,
                     medoids: list[int]) -> float:
    return float((weights * distances[:, medoids].min(axis=1)).sum())


def reduce_scenarios(scenario_set: UncertaintyScenarioSet, keep: int
                     ) -> UncertaintyScenarioSet:
    """Probability-weighted k-medoids reduction (build + swap passes).

    Each dropped realization's probability moves to its nearest retained
    medoid.  Deterministic: the greedy build step and first-improvement
    swaps do not draw random numbers.
    """
    if keep < 1:
        raise ValidationError("keep must be >= 1")
    n = scenario_set.size
    if keep >= n:
        return scenario_set
    points = scenario_set.flattened()
    weights = scenario_set.probabilities
    diff = points[:, None, :] - points[None, :, :]
    distances = np.sqrt((diff ** 2).sum(axis=2))

    medoids: list[int] = []
    for _ in range(keep):
        best, best_cost = -1, math.inf
        for cand in range(n):
            if cand in medoids:
                continue
            cost = _assignment_cost(distances, weights, medoids + [cand])
            if cost < best_cost - 1e-12:
                best, best_cost = cand, cost
        medoids.append(best)

    improved = True
    while improved:
        improved = False
        current = _assignment_cost(distances, weights, medoids)
        for pos in range(keep):
            for cand in range(n):
                if cand in medoids:
                    continue
                trial = medoids[:pos] + [cand] + medoids[pos + 1:]
                if _assignment_cost(distances, weights, trial) < current - 1e-12:
                    medoids = trial
                    improved = True
                    current = _assignment_cost(distances, weights, medoids)
    medoids = sorted(medoids)
    assign = np.argmin(distances[:, medoids], axis=1)
    probs = np.zeros(keep)
    for idx in range(n):
        probs[assign[idx]] += weights[idx]
    return UncertaintyScenarioSet(scenario_set.res[medoids],
                                  scenario_set.load[medoids], probs)


# ---------------------------------------------------------------------------
# metrics


def metric_ei(c_opo: float, c_cpo: float) -> float:
    """Economics improvement over the open loop, in percent."""
    if c_opo == 0:
        raise MetricError("EI undefined: open-loop cost is zero")
    return (c_opo - c_cpo) / c_opo * 100.0


def metric_voi(c_opo: float, c_cpo: float, c_ppo: float) -> float:
    """Fraction of the open-loop-to-perfect-information gap captured."""
    if c_opo == c_ppo:
        raise MetricError("VoI undefined: open-loop equals perfect-information cost")
    return (c_opo - c_cpo) / (c_opo - c_ppo)


def metric_loss(c_hat: float, c_tilde: float) -> float:
    """Loss of operation economics of a prediction versus the perfect-RES
    anchor, in percent."""
    if c_tilde == 0:
        raise MetricError("Loss undefined: perfect-information cost is zero")
    return (c_hat - c_tilde) / c_tilde * 100.0


def stats_metrics(predicted: np.ndarray, actual: np.ndarray,
                  threshold: float = 1.0) -> dict[str, float | None]:
    """MAE, RMSE, and percentage errors of a prediction.

    Percentage metrics are restricted to points with actual output above
    ``threshold`` MW; MOPE/MUPE are the conditional mean percentage errors
    over over- and under-predicted points (implementation-defined; empty
    side gives 0, no valid points gives None).
    """
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise ValidationError("prediction and actual shapes differ")
    err = (predicted - actual).ravel()
    out: dict[str, float | None] = {
        "mae": float(np.abs(err).mean()),
        "rmse": float(np.sqrt((err ** 2).mean())),
    }
    act = actual.ravel()
    valid = act > threshold
    if not valid.any():
        out["mape"] = out["mope"] = out["mupe"] = None
        return out
    pct = err[valid] / act[valid] * 100.0
    out["mape"] = float(np.abs(pct).mean())
    over = pct[pct > 0]
    under = pct[pct < 0]
    out["mope"] = float(over.mean()) if over.size else 0.0
    out["mupe"] = float(-under.mean()) if under.size else 0.0
    return out


# ---------------------------------------------------------------------------
# prediction-error asymmetry


@dataclass
class AsymmetryPoint:
    signed_error: float
    mape: float
    loss: float


@dataclass
class AsymmetryResult:
    points: list[AsymmetryPoint]
    over_slope: float
    under_slope: float

    def rows(self) -> list[dict[str, float]]:
        return [{"signed_error_pct": p.signed_error * 100.0,
                 "mape_pct": p.mape, "loss_pct": p.loss}
                for p in self.points]


def asymmetry_experiment(system: PowerSystem, scenario: OperationScenario,
                         error_grid: np.ndarray,
                         penalties: Penalties = Penalties(), *,
                         gap: float = 1e-6) -> AsymmetryResult:
    """Sweep multiplicative RES prediction errors through the open loop.

    Each grid value ``e`` evaluates the prediction ``(1 + e) * actual`` with
    the raw reserves, so the signed error against the realization is exact;
    the loss anchor is the same pipeline fed the realization itself.
    """
    if not np.any(scenario.actual_res > 0):
        raise ValidationError("asymmetry sweep needs positive actual RES")
    anchor = run_method(system, scenario, "anchor", scenario.actual_res,
                        scenario.raw_reserve, penalties, gap=gap)
    points = []
    for e in np.asarray(error_grid, dtype=float):
        perturbed = (1.0 + e) * scenario.actual_res
        record = run_method(system, scenario, "sweep", perturbed,
                            scenario.raw_reserve, penalties, gap=gap)
        stats = stats_metrics(perturbed, scenario.actual_res)
        loss = metric_loss(record.actual_cost, anchor.actual_cost)
        points.append(AsymmetryPoint(float(e), stats["mape"] or 0.0, loss))

    def slope(branch: list[AsymmetryPoint]) -> float:
        if len(branch) < 2:
            return math.nan
        x = np.array([p.mape for p in branch])
        y = np.array([p.loss for p in branch])
        denom = ((x - x.mean()) ** 2).sum()
        return float(((x - x.mean()) * (y - y.mean())).sum() / denom) \
            if denom > 0 else math.nan

    return AsymmetryResult(
        points,
        over_slope=slope([p for p in points if p.signed_error > 0]),
        under_slope=slope([p for p in points if p.signed_error < 0]))
