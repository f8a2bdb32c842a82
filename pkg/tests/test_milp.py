import itertools
import math

import pytest

from copo.milp import (
    LinearModel,
    ModelBuilder,
    ModelError,
    SolverBackendError,
    SolveStatus,
    Variable,
    export_lp_text,
    fix_binaries,
    solve,
)


def simple_lp():
    mb = ModelBuilder()
    mb.var("x", 0.0, 10.0)
    mb.constr({"x": 1.0}, ">=", 3.0, "floor")
    mb.add_objective({"x": 1.0})
    return mb.build()


def test_min_x_with_floor():
    res = solve(simple_lp(), gap=1e-9)
    assert res.status == SolveStatus.OPTIMAL
    assert res.values["x"] == pytest.approx(3.0)
    assert res.objective == pytest.approx(3.0)


def test_infeasible_status():
    mb = ModelBuilder()
    mb.var("x", 0.0, math.inf)
    mb.constr({"x": 1.0}, "<=", -1.0)
    res = solve(mb.build())
    assert res.status == SolveStatus.INFEASIBLE
    assert res.values == {}


def test_unbounded_status():
    mb = ModelBuilder()
    mb.var("x", -math.inf, math.inf)
    mb.add_objective({"x": 1.0})
    res = solve(mb.build())
    assert res.status == SolveStatus.UNBOUNDED


def test_knapsack_against_enumeration():
    values = [6.0, 10.0, 12.0]
    weights = [1.0, 2.0, 3.0]
    capacity = 5.0
    mb = ModelBuilder()
    names = [mb.binary(f"z{i}") for i in range(3)]
    mb.constr({names[i]: weights[i] for i in range(3)}, "<=", capacity)
    mb.add_objective({names[i]: -values[i] for i in range(3)})
    res = solve(mb.build(), gap=1e-9)

    best = min(
        -sum(v * pick for v, pick in zip(values, subset))
        for subset in itertools.product((0, 1), repeat=3)
        if sum(w * pick for w, pick in zip(weights, subset)) <= capacity)
    assert best == -22.0
    assert res.objective == pytest.approx(best)


def test_mip_reports_gap_and_bound():
    mb = ModelBuilder()
    names = [mb.binary(f"z{i}") for i in range(4)]
    mb.constr({n: 1.0 for n in names}, "<=", 2.0)
    mb.add_objective({n: -1.0 for n in names})
    res = solve(mb.build(), gap=1e-9)
    assert res.gap is not None and res.gap <= 1e-6
    assert res.best_bound == pytest.approx(res.objective, abs=1e-6)


def test_duals_follow_sign_convention():
    # min 2x + 3y s.t. x + y = 4, boxes [0, 3]: optimum (3, 1)
    mb = ModelBuilder()
    mb.var("x", 0.0, 3.0)
    mb.var("y", 0.0, 3.0)
    mb.constr({"x": 1.0, "y": 1.0}, "==", 4.0, "balance")
    mb.add_objective({"x": 2.0, "y": 3.0})
    res = solve(mb.build())
    # stationarity c + A'mu + nu_ub - nu_lb = 0 at the optimum
    mu = res.eq_duals[0]
    assert mu == pytest.approx(-3.0)
    assert res.upper_bound_duals["x"] == pytest.approx(1.0)
    assert res.lower_bound_duals["y"] == pytest.approx(0.0)

    lp = simple_lp()
    res = solve(lp)
    assert res.ineq_duals[0] == pytest.approx(1.0)  # >= row, normalized dual


def test_strong_duality_on_random_lps(rng):
    from copo.verification import random_lp

    for _ in range(20):
        lp = random_lp(rng)
        res = solve(lp, gap=1e-9)
        assert res.status == SolveStatus.OPTIMAL
        dual = 0.0
        for k, con in enumerate(lp.constraints):
            if con.sense == "==":
                dual -= res.eq_duals[k] * con.rhs
            else:
                rhs = con.rhs if con.sense == "<=" else -con.rhs
                dual -= res.ineq_duals[k] * rhs
        for v in lp.variables:
            if math.isfinite(v.lb):
                dual += res.lower_bound_duals[v.name] * v.lb
            if math.isfinite(v.ub):
                dual -= res.upper_bound_duals[v.name] * v.ub
        assert dual == pytest.approx(res.objective, rel=1e-6, abs=1e-6)


def test_validation_rejects_bad_models():
    mb = ModelBuilder()
    mb.var("x")
    with pytest.raises(ModelError):
        mb.var("x")

    mb = ModelBuilder()
    mb.var("x")
    mb.constr({"ghost": 1.0}, "<=", 0.0)
    with pytest.raises(ModelError):
        mb.build()

    bad = LinearModel([Variable("x", 2.0, 1.0)], [], {})
    with pytest.raises(ModelError):
        bad.validate()

    nonfinite = LinearModel([Variable("x")], [], {"x": math.inf})
    with pytest.raises(ModelError):
        nonfinite.validate()


def test_unknown_backend_is_an_error():
    with pytest.raises(SolverBackendError):
        solve(simple_lp(), backend="cplex")


def test_solve_is_deterministic():
    mb = ModelBuilder()
    names = [mb.binary(f"z{i}") for i in range(6)]
    for k in range(3):
        mb.constr({n: float((i + k) % 3 + 1) for i, n in enumerate(names)},
                  "<=", 6.0, f"c{k}")
    mb.add_objective({n: -float(i + 1) for i, n in enumerate(names)})
    model = mb.build()
    first = solve(model, gap=1e-9)
    second = solve(model, gap=1e-9)
    assert first.values == second.values


def test_export_lp_text_mentions_rows():
    text = export_lp_text(simple_lp())
    assert "minimize" in text and "floor" in text and "x" in text


def test_solve_dump_flag_writes_model(tmp_path):
    path = tmp_path / "model.lp"
    solve(simple_lp(), dump_lp=str(path))
    assert "floor" in path.read_text()


class TestFixBinaries:
    def build(self, bound: float = 10.0):
        mb = ModelBuilder()
        mb.binary("u")
        mb.var("p", 0.0, math.inf)
        mb.constr({"p": 1.0, "u": -bound}, "<=", 0.0, "cap")
        mb.add_objective({"p": -1.0, "u": 2.0})
        return mb.build()

    def test_fold_one(self):
        lp = fix_binaries(self.build(), {"u": 1.0})
        cap = lp.constraints[0]
        assert cap.coeffs == {"p": 1.0}
        assert cap.rhs == pytest.approx(10.0)
        assert lp.objective_constant == pytest.approx(2.0)
        assert not lp.integer_names()

    def test_fold_zero(self):
        lp = fix_binaries(self.build(), {"u": 0.0})
        assert lp.constraints[0].rhs == pytest.approx(0.0)
        res = solve(lp)
        assert res.values["p"] == pytest.approx(0.0)

    def test_missing_and_extra_assignments(self):
        with pytest.raises(ModelError):
            fix_binaries(self.build(), {})
        with pytest.raises(ModelError):
            fix_binaries(self.build(), {"u": 1.0, "p": 0.0})

    def test_feasible_point_stays_feasible(self):
        model = self.build()
        res = solve(model, gap=1e-9)
        assignment = {"u": float(res.binary("u"))}
        lp = fix_binaries(model, assignment)
        lp_res = solve(lp, gap=1e-9)
        assert lp_res.status == SolveStatus.OPTIMAL
        assert lp_res.objective == pytest.approx(res.objective, abs=1e-6)

    def test_uc_fixture_fixed_lp_matches_mip(self, t1_system, t1_scenario):
        from copo.operation import build_uc

        model, _ = build_uc(t1_system, t1_scenario.raw_res_prediction,
                            t1_scenario.raw_reserve,
                            t1_scenario.raw_load_prediction)
        mip = solve(model, gap=1e-9)
        assignment = {name: float(mip.binary(name))
                      for name in model.integer_names()}
        lp_res = solve(fix_binaries(model, assignment), gap=1e-9)
        assert lp_res.objective == pytest.approx(mip.objective, rel=1e-9)
        assert lp_res.eq_duals is not None
