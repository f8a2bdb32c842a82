import dataclasses

import numpy as np
import pytest

from copo.milp import SolveStatus, solve
from copo.operation import (
    Penalties,
    UcInfeasibleError,
    actual_cost,
    build_ed,
    build_uc,
    ed_variable_inventory,
    extract_outcome,
    extract_plan,
    run_open_loop,
    uc_variable_inventory,
    variable_counts,
)
from copo.system import ValidationError
from copo.toysystems import (
    _unit,
    fixture_t1_plan,
    fixture_t1_scenario,
    fixture_t1_system,
    quickstart_t1_system,
)

PEN = Penalties()


def solve_uc(system, res, reserve, load):
    model, uv = build_uc(system, np.asarray(res, dtype=float),
                         np.asarray(reserve, dtype=float),
                         np.asarray(load, dtype=float))
    result = solve(model, gap=1e-9)
    assert result.status == SolveStatus.OPTIMAL
    return extract_plan(system, uv, result)


def solve_ed(system, plan, res, load, penalties=PEN):
    model, ev = build_ed(system, plan, np.asarray(res, dtype=float),
                         np.asarray(load, dtype=float), penalties)
    result = solve(model, gap=1e-9)
    assert result.status == SolveStatus.OPTIMAL
    return extract_outcome(system, ev, result, penalties)


class TestCommitmentModel:
    def test_nominal_day(self, t1_system):
        plan = solve_uc(t1_system, [[30.0]], [[0.0, 0.0]], [[80.0]])
        assert plan.commit[0, 0] == 1.0
        assert plan.res_schedule[0, 0] == pytest.approx(30.0)
        assert plan.power[0, 0] == pytest.approx(50.0)
        assert plan.anticipated_cost == pytest.approx(1150.0)

    def test_heavy_over_prediction(self, t1_system):
        # RES is tie-limited, so commitment stays on and the unit rides at
        # its minimum: 100 startup + 50 no-load + 10 MW at $20
        plan = solve_uc(t1_system, [[200.0]], [[0.0, 0.0]], [[80.0]])
        assert plan.power[0, 0] == pytest.approx(10.0)
        assert plan.res_schedule[0, 0] == pytest.approx(70.0)
        assert plan.anticipated_cost == pytest.approx(350.0)

    def test_reserve_beyond_capacity_is_infeasible(self, t1_system):
        model, _ = build_uc(t1_system, np.array([[30.0]]),
                            np.array([[150.0, 0.0]]), np.array([[80.0]]))
        assert solve(model).status == SolveStatus.INFEASIBLE

    def test_variable_inventory(self, t1_system):
        model, _ = build_uc(t1_system, np.array([[30.0]]),
                            np.array([[0.0, 0.0]]), np.array([[80.0]]))
        assert variable_counts(model) == uc_variable_inventory(t1_system)

    def test_negative_prediction_rejected(self, t1_system):
        with pytest.raises(ValidationError):
            build_uc(t1_system, np.array([[-1.0]]), np.array([[0.0, 0.0]]),
                     np.array([[80.0]]))

    def test_min_up_keeps_unit_online(self):
        # three hours, load dips in the middle; a 3-hour minimum-up unit
        # committed at hour 1 cannot cycle off for one hour
        unit = _unit("g1", "b1", p_min=10, p_max=100, cost=20.0, startup=500.0,
                     noload=10.0, min_up=3, min_down=3)
        cheap = _unit("g2", "b1", p_min=0, p_max=30, cost=5.0, startup=0.0,
                      noload=0.0)
        system = dataclasses.replace(
            fixture_t1_system(), horizon_hours=3,
            thermal_units=(unit, cheap), branches=(), buses=("b1",),
            res_units=(), load_buses=("b1",))
        plan = solve_uc(system, np.zeros((3, 0)), np.zeros((3, 2)),
                        [[90.0], [25.0], [90.0]])
        assert plan.commit[:, 0].tolist() == [1.0, 1.0, 1.0]

    def test_min_down_blocks_early_restart(self):
        # unit on at t=0 with a 3-hour minimum-down: shutting down for the
        # cheap middle hours would bar the restart needed at hour 3
        expensive = dataclasses.replace(
            _unit("g1", "b1", p_min=10, p_max=100, cost=20.0, startup=10.0,
                  noload=500.0, min_down=3, committed=True, output=15.0),
            shutdown_ramp=100.0)
        cheap = _unit("g2", "b1", p_min=0, p_max=30, cost=5.0, startup=0.0,
                      noload=0.0)
        system = dataclasses.replace(
            fixture_t1_system(), horizon_hours=3,
            thermal_units=(expensive, cheap), branches=(), buses=("b1",),
            res_units=(), load_buses=("b1",))
        plan = solve_uc(system, np.zeros((3, 0)), np.zeros((3, 2)),
                        [[15.0], [15.0], [90.0]])
        assert plan.commit[:, 0].tolist() == [1.0, 1.0, 1.0]

        # with a 1-hour minimum-down the off-and-restart pattern wins
        relaxed = dataclasses.replace(expensive, min_down=1)
        system = dataclasses.replace(system, thermal_units=(relaxed, cheap))
        plan = solve_uc(system, np.zeros((3, 0)), np.zeros((3, 2)),
                        [[15.0], [15.0], [90.0]])
        assert plan.commit[:, 0].tolist() == [0.0, 0.0, 1.0]

    def test_startup_ramp_limits_first_hour(self):
        unit = _unit("g1", "b1", p_min=10, p_max=100, cost=20.0, startup=0.0,
                     noload=0.0)
        unit = dataclasses.replace(unit, startup_ramp=40.0)
        system = dataclasses.replace(
            fixture_t1_system(), thermal_units=(unit,), branches=(),
            buses=("b1",), res_units=(), load_buses=("b1",))
        model, _ = build_uc(system, np.zeros((1, 0)), np.zeros((1, 2)),
                            np.array([[50.0]]))
        assert solve(model).status == SolveStatus.INFEASIBLE


class TestDispatchModel:
    def test_replay_when_forecast_exact(self, t1_system, t1_plan):
        outcome = solve_ed(t1_system, t1_plan, [[30.0]], [[80.0]])
        assert outcome.ed_cost == pytest.approx(1000.0)
        assert np.all(outcome.shortfall == 0.0)
        assert np.all(outcome.surplus == 0.0)

    def test_reserve_scarcity_forces_shedding(self, t1_system, t1_plan):
        # zero scheduled reserve pins output at the base point; the missing
        # 30 MW of RES becomes shortfall at $2000
        outcome = solve_ed(t1_system, t1_plan, [[0.0]], [[80.0]])
        assert outcome.power[0, 0] == pytest.approx(50.0)
        assert outcome.shortfall[0] == pytest.approx(30.0)
        assert outcome.ed_cost_generation == pytest.approx(1000.0)
        assert outcome.ed_cost_slack == pytest.approx(60000.0)

    def test_over_availability_is_curtailed(self, t1_system, t1_plan):
        outcome = solve_ed(t1_system, t1_plan, [[60.0]], [[80.0]])
        assert outcome.power[0, 0] == pytest.approx(50.0)
        assert outcome.res_dispatch[0, 0] == pytest.approx(30.0)
        assert outcome.ed_cost == pytest.approx(1000.0)

    def test_all_off_plan_survives_on_slack(self, t1_system):
        zeros = np.zeros((1, 1))
        plan = dataclasses.replace(
            fixture_t1_plan(), commit=zeros.copy(), startup=zeros.copy(),
            power=zeros.copy(), seg_power=[zeros.copy()],
            res_schedule=zeros.copy(), uc_cost_startup=0.0,
            uc_cost_noload=0.0, uc_cost_generation=0.0, anticipated_cost=0.0)
        outcome = solve_ed(t1_system, plan, [[0.0]], [[80.0]])
        assert outcome.shortfall[0] == pytest.approx(80.0)
        assert outcome.ed_cost == pytest.approx(160000.0)

    def test_quick_start_recommitment_uses_nr(self):
        # spinning reserve capped at zero and NR at exactly the requirement,
        # so the schedule is forced: O = 1, NR = 20 on the peaker
        base = quickstart_t1_system()
        units = (dataclasses.replace(base.thermal_units[0], sr_max=0.0),
                 dataclasses.replace(base.thermal_units[1], sr_max=0.0,
                                     nr_max=20.0))
        system = dataclasses.replace(base, thermal_units=units)
        plan = solve_uc(system, [[30.0]], [[0.0, 20.0]], [[80.0]])
        assert plan.nr_commit[0, 1] == 1.0
        assert plan.nr[0, 1] == pytest.approx(20.0)
        # RES vanishes: the peaker starts, runs at its scheduled NR, and the
        # remaining 10 MW is shed
        outcome = solve_ed(system, plan, [[0.0]], [[80.0]])
        assert outcome.qs_commit[0, 1] == 1.0
        assert outcome.power[0, 1] == pytest.approx(20.0)
        assert outcome.ed_cost_startup == pytest.approx(150.0)
        assert outcome.shortfall[0] == pytest.approx(10.0)

    def test_variable_inventory(self, t1_system, t1_plan):
        model, _ = build_ed(t1_system, t1_plan, np.array([[30.0]]),
                            np.array([[80.0]]), PEN)
        assert variable_counts(model) == ed_variable_inventory(t1_system)

    def test_hourly_ramp_trades_curtailment_for_shedding(self):
        """Two coupled hours: lifting hour-1 output (curtailing cheap RES)
        lets the ramp carry hour 2 to its reserve band and avoids shedding.
        Hand optimum: P = (50, 70), 10 MW curtailed, no slack."""
        from copo.operation import CommitmentPlan

        unit = dataclasses.replace(
            _unit("g1", "b1", p_min=10, p_max=100, cost=20.0, startup=100.0,
                  noload=50.0, sr_max=30.0, committed=True, output=40.0),
            ramp_up=20.0, ramp_down=20.0, startup_ramp=40.0,
            shutdown_ramp=40.0)
        system = dataclasses.replace(
            fixture_t1_system(), horizon_hours=2, thermal_units=(unit,),
            branches=(), buses=("b1",), load_buses=("b1",))
        ones = np.ones((2, 1))
        plan = CommitmentPlan(
            commit=ones.copy(), startup=np.zeros((2, 1)),
            shutdown=np.zeros((2, 1)), nr_commit=np.zeros((2, 1)),
            power=40.0 * ones, seg_power=[40.0 * ones],
            res_schedule=30.0 * ones, sr=30.0 * ones, nr=np.zeros((2, 1)),
            uc_cost_startup=0.0, uc_cost_noload=100.0,
            uc_cost_generation=1600.0, anticipated_cost=1700.0)
        outcome = solve_ed(system, plan, [[30.0], [0.0]], [[70.0], [70.0]])
        assert outcome.power[:, 0] == pytest.approx([50.0, 70.0])
        assert outcome.res_dispatch[0, 0] == pytest.approx(20.0)
        assert np.all(outcome.shortfall == 0.0)
        assert outcome.ed_cost == pytest.approx(2400.0)

    def test_recourse_never_infeasible_and_monotone(self, t1_system, t1_plan):
        costs = []
        for w in (0.0, 10.0, 20.0, 30.0, 45.0, 60.0):
            outcome = solve_ed(t1_system, t1_plan, [[w]], [[80.0]])
            costs.append(outcome.ed_cost)
        assert all(b <= a + 1e-6 for a, b in zip(costs, costs[1:]))

    def test_perfect_information_consistency(self, t1_system):
        plan = solve_uc(t1_system, [[30.0]], [[0.0, 0.0]], [[80.0]])
        outcome = solve_ed(t1_system, plan, [[30.0]], [[80.0]])
        assert np.all(outcome.shortfall == 0.0)
        assert outcome.ed_cost_generation <= plan.uc_cost_generation + 1e-6


class TestAccounting:
    def test_paper_row_reconstruction(self):
        from copo.operation import CostReport

        report = CostReport(uc_startup=1.1e3, uc_noload=2.1e3,
                            ed_startup=0.1e3, ed_noload=0.1e3,
                            ed_generation=237.9e3, ed_slack=0.0)
        assert report.actual_uc_cost == pytest.approx(3.2e3)
        assert report.actual_system_cost == pytest.approx(241.3e3)

    def test_zero_everything(self, t1_system, t1_plan):
        zero_plan = dataclasses.replace(
            t1_plan, uc_cost_startup=0.0, uc_cost_noload=0.0,
            uc_cost_generation=0.0, anticipated_cost=0.0)
        outcome = solve_ed(t1_system, t1_plan, [[30.0]], [[80.0]])
        zero_outcome = dataclasses.replace(
            outcome, ed_cost_startup=0.0, ed_cost_noload=0.0,
            ed_cost_generation=0.0, ed_cost_slack=0.0)
        assert actual_cost(zero_plan, zero_outcome).actual_system_cost == 0.0

    def test_identity_and_breakdown(self, t1_system, t1_plan):
        outcome = solve_ed(t1_system, t1_plan, [[30.0]], [[80.0]])
        report = actual_cost(t1_plan, outcome)
        assert report.actual_system_cost == pytest.approx(1150.0)
        assert report.actual_system_cost == (
            report.actual_uc_cost + report.hindsight_ed_cost)
        row = report.as_row()
        assert row["total"] == pytest.approx(
            row["startup"] + row["no_load"] + row["ed_startup_noload"]
            + row["ed_generation"] + row["ed_slack"])


class TestOpenLoop:
    def test_perfect_forecast_day(self, t1_system, t1_scenario):
        plan, outcome, report = run_open_loop(t1_system, t1_scenario, gap=1e-9)
        assert report.actual_system_cost == pytest.approx(1150.0)

    def test_over_availability_day(self, t1_system):
        scenario = fixture_t1_scenario(res_prediction=30.0, res_actual=60.0)
        _, outcome, report = run_open_loop(t1_system, scenario, gap=1e-9)
        assert outcome.res_dispatch[0, 0] <= 30.0 + 1e-6
        assert report.actual_system_cost == pytest.approx(1150.0)

    def test_uc_infeasibility_is_hard_error(self, t1_system):
        scenario = dataclasses.replace(
            fixture_t1_scenario(), raw_reserve=np.array([[150.0, 0.0]]))
        with pytest.raises(UcInfeasibleError):
            run_open_loop(t1_system, scenario)


class TestPlanValidation:
    def test_status_logic_violation(self, t1_system, t1_plan):
        broken = dataclasses.replace(t1_plan, startup=np.zeros((1, 1)))
        with pytest.raises(ValidationError, match="status logic"):
            broken.validate(t1_system)

    def test_segment_sum_violation(self, t1_system, t1_plan):
        broken = dataclasses.replace(t1_plan, seg_power=[np.array([[40.0]])])
        with pytest.raises(ValidationError, match="segments"):
            broken.validate(t1_system)

    def test_nr_on_non_quick_start(self, t1_system, t1_plan):
        broken = dataclasses.replace(
            t1_plan, nr_commit=np.ones((1, 1)), commit=np.zeros((1, 1)),
            startup=np.zeros((1, 1)), power=np.zeros((1, 1)),
            seg_power=[np.zeros((1, 1))], res_schedule=np.zeros((1, 1)))
        with pytest.raises(ValidationError, match="quick-start"):
            broken.validate(t1_system)

    def test_dispatch_invariants(self, t1_system, t1_plan):
        outcome = solve_ed(t1_system, t1_plan, [[30.0]], [[80.0]])
        outcome.validate(t1_plan)
        broken = dataclasses.replace(outcome, qs_commit=np.ones((1, 1)))
        with pytest.raises(ValidationError):
            broken.validate(t1_plan)
