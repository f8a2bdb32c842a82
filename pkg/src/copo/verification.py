"""Release-gate oracle suites: KKT equivalence, bilevel-reduction agreement,
and bound monotonicity.

Each suite returns named pass/fail results; the verify command prints one
line per check and exits nonzero on any failure.  Everything here runs on
shipped fixtures, so a fresh checkout can self-certify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kkt import KktBigMBindingError, derive_kkt, solve_kkt_system
from .milp import LinearModel, ModelBuilder, solve
from .scenarios import OperationScenario
from .toysystems import (
    bias_week_scenarios,
    bias_week_system,
    fixture_t1_scenario,
    prop1_instances,
    reserve_free_t1_system,
)
from .training import TrainingConfig, train, verify_proposition1


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerificationReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}"
                for c in self.checks]


def random_lp(rng: np.random.Generator, max_vars: int = 10,
              max_rows: int = 15) -> LinearModel:
    """A feasible bounded LP: box-bounded variables and rows slackened
    around a random interior point."""
    n = int(rng.integers(2, max_vars + 1))
    n_rows = int(rng.integers(2, max_rows + 1))
    n_eq = int(rng.integers(0, 2))
    mb = ModelBuilder()
    names = [mb.var(f"y{i}", 0.0, float(rng.uniform(1.0, 10.0)))
             for i in range(n)]
    interior = rng.uniform(0.1, 0.9, n)
    for k in range(n_rows - n_eq):
        coeffs = rng.uniform(-5.0, 5.0, n) * (rng.random(n) < 0.6)
        if not np.any(coeffs):
            coeffs[int(rng.integers(0, n))] = float(rng.uniform(1.0, 5.0))
        mb.constr({names[i]: float(coeffs[i]) for i in range(n)
                   if coeffs[i] != 0.0}, "<=",
                  float(coeffs @ interior + rng.uniform(0.1, 2.0)), f"r{k}")
    for k in range(n_eq):
        coeffs = rng.uniform(-3.0, 3.0, n)
        mb.constr({names[i]: float(coeffs[i]) for i in range(n)}, "==",
                  float(coeffs @ interior), f"e{k}")
    mb.add_objective({names[i]: float(c) for i, c in
                      enumerate(rng.uniform(-5.0, 5.0, n))})
    return mb.build()


def kkt_equivalence_suite(count: int = 50, seed: int = 20240601, *,
                          big_m_primal: float = 1e5, big_m_dual: float = 1e5,
                          rel_tol: float = 1e-6) -> list[CheckResult]:
    """Objective agreement between direct LP solves and KKT-embedded MIPs."""
    rng = np.random.default_rng(seed)
    out = []
    for idx in range(count):
        lp = random_lp(rng)
        direct = solve(lp, gap=1e-9)
        name = f"kkt_lp[{idx}]"
        try:
            kkt = derive_kkt(lp, big_m_primal, big_m_dual)
            _, objective = solve_kkt_system(kkt)
        except KktBigMBindingError as exc:
            out.append(CheckResult(name, False, f"Big-M binding: {exc}"))
            continue
        if math.isnan(objective):
            out.append(CheckResult(name, False, "KKT system infeasible"))
            continue
        rel = abs(objective - direct.objective) / max(1.0, abs(direct.objective))
        out.append(CheckResult(
            name, rel <= rel_tol,
            f"direct {direct.objective:.9g} vs KKT {objective:.9g} "
            f"(rel {rel:.2e})"))
    return out


def _stretched_instance(horizon: int) -> tuple:
    """The one-unit oracle instance stretched to an arbitrary horizon."""
    from dataclasses import replace
    base = reserve_free_t1_system()
    system = replace(base, horizon_hours=horizon)
    day = OperationScenario(
        id="h1", raw_res_prediction=np.full((horizon, 1), 60.0),
        raw_load_prediction=np.full((horizon, 1), 80.0),
        actual_res=np.full((horizon, 1), 30.0),
        actual_load=np.full((horizon, 1), 80.0),
        raw_reserve=np.zeros((horizon, 2)))
    return system, [day], np.round(np.arange(0.0, 1.5001, 0.05), 10), 0.0


def proposition1_suite(*, horizon: int | None = None, pattern_cap: int = 4096,
                       tolerance: float = 0.01) -> list[CheckResult]:
    """Brute-force risk vs cut-loop optimum on the tiny shipped instances."""
    instances = ([_stretched_instance(horizon)] if horizon is not None
                 else prop1_instances())
    out = []
    for idx, (system, scenarios, grid, lambda_w) in enumerate(instances):
        config = TrainingConfig(lambda_w=lambda_w, lambda_r=0.0,
                                gap_target=0.01, max_iterations=10,
                                solver_gap=1e-6, alpha=0.0)
        report = verify_proposition1(system, scenarios, grid, config,
                                     pattern_cap=pattern_cap,
                                     tolerance=tolerance)
        out.append(CheckResult(
            f"proposition1[{idx}]", report.passed,
            f"brute {report.brute_objective:.6g} vs trained "
            f"{report.trained_objective:.6g} (rel {report.relative_gap:.2e}, "
            f"grid best {report.grid_best:g})"))
    return out


def bound_monotonicity_suite() -> list[CheckResult]:
    """Train on shipped fixtures; bounds must move one way and close."""
    fixtures = [
        ("t1_biased", reserve_free_t1_system(),
         [fixture_t1_scenario(res_prediction=60.0, res_actual=30.0)]),
        ("bias_week3", bias_week_system(), bias_week_scenarios(4)[:3]),
    ]
    out = []
    for name, system, scenarios in fixtures:
        config = TrainingConfig(lambda_w=0.0, lambda_r=0.0, gap_target=0.01,
                                max_iterations=6, solver_gap=1e-6, alpha=0.0)
        _, state = train(system, scenarios, config)
        lbs = [h.lower_bound for h in state.history]
        ubs = [h.upper_bound for h in state.history]
        monotone_lb = all(b >= a - 1e-6 for a, b in zip(lbs, lbs[1:]))
        monotone_ub = all(b <= a + 1e-6 for a, b in zip(ubs, ubs[1:]))
        closed = state.converged or state.limit_reached
        final_gap = state.history[-1].gap
        out.append(CheckResult(
            f"bounds[{name}]",
            monotone_lb and monotone_ub and closed
            and (state.converged and final_gap <= config.gap_target
                 or state.limit_reached),
            f"LB {lbs[-1]:.6g} UB {ubs[-1]:.6g} gap {final_gap:.4g} "
            f"iters {state.iteration} "
            f"{'converged' if state.converged else 'limit-reached'}"))
    return out


def run_verification(*, big_m_primal: float = 1e5, big_m_dual: float = 1e5,
                     prop1_horizon: int | None = None,
                     pattern_cap: int = 4096,
                     kkt_count: int = 50) -> VerificationReport:
    """All oracle suites; raises Prop1InstanceError on oversized instances."""
    checks = []
    checks.extend(kkt_equivalence_suite(kkt_count, big_m_primal=big_m_primal,
                                        big_m_dual=big_m_dual))
    checks.extend(proposition1_suite(horizon=prop1_horizon,
                                     pattern_cap=pattern_cap))
    checks.extend(bound_monotonicity_suite())
    return VerificationReport(checks)
