"""Hand-sized systems and days with enumerable optima.

These fixtures back the oracle suites and the test corpus: every expected
number derived from them is reachable by brute force (pattern enumeration,
grid search, or a one-line LP argument).
"""

from __future__ import annotations

import numpy as np

from .operation import CommitmentPlan
from .scenarios import OperationScenario
from .system import (
    Branch,
    InitialStatus,
    PowerSystem,
    RenewableUnit,
    Segment,
    ThermalUnit,
    build_sensitivities,
)


def _unit(uid: str, bus: str, *, p_min: float, p_max: float, cost: float,
          startup: float, noload: float, quick_start: bool = False,
          sr_max: float = 0.0, nr_max: float = 0.0, ramp: float | None = None,
          min_up: int = 1, min_down: int = 1,
          committed: bool = False, output: float = 0.0,
          segments: tuple[Segment, ...] | None = None) -> ThermalUnit:
    ramp = p_max if ramp is None else ramp
    return ThermalUnit(
        id=uid, bus=bus, quick_start=quick_start, p_min=p_min, p_max=p_max,
        segments=segments or (Segment(p_max, cost),),
        startup_cost=startup, noload_cost=noload,
        ramp_up=ramp, ramp_down=ramp, startup_ramp=ramp, shutdown_ramp=ramp,
        min_up=min_up, min_down=min_down, sr_max=sr_max, nr_max=nr_max,
        initial_status=InitialStatus(committed, output))


def fixture_t1_system(*, sr_max: float = 100.0) -> PowerSystem:
    """One 10..100 MW unit and one RES unit behind a 75 MW tie, one hour.

    The tie keeps the RES from serving the 80 MW load alone, so commitment
    is required even under heavy over-prediction.
    """
    system = PowerSystem(
        buses=("b1", "b2"),
        thermal_units=(_unit("g1", "b1", p_min=10, p_max=100, cost=20.0,
                             startup=100.0, noload=50.0, sr_max=sr_max),),
        res_units=(RenewableUnit("w1", "b2"),),
        branches=(Branch("l1", "b1", "b2", 75.0, 0.1),),
        load_buses=("b1",), horizon_hours=1)
    return build_sensitivities(system, "b1")


def fixture_t1_scenario(res_prediction: float = 30.0,
                        res_actual: float = 30.0,
                        load: float = 80.0) -> OperationScenario:
    return OperationScenario(
        id="t1", raw_res_prediction=np.array([[res_prediction]]),
        raw_load_prediction=np.array([[load]]),
        actual_res=np.array([[res_actual]]),
        actual_load=np.array([[load]]),
        raw_reserve=np.zeros((1, 2)))


def fixture_t1_plan() -> CommitmentPlan:
    """The committed plan of the nominal day with zero spinning reserve."""
    return CommitmentPlan(
        commit=np.array([[1.0]]), startup=np.array([[1.0]]),
        shutdown=np.zeros((1, 1)), nr_commit=np.zeros((1, 1)),
        power=np.array([[50.0]]), seg_power=[np.array([[50.0]])],
        res_schedule=np.array([[30.0]]), sr=np.zeros((1, 1)),
        nr=np.zeros((1, 1)), uc_cost_startup=100.0, uc_cost_noload=50.0,
        uc_cost_generation=1000.0, anticipated_cost=1150.0)


def reserve_free_t1_system() -> PowerSystem:
    """Fixture T1 with all reserve capability removed (oracle instances)."""
    return fixture_t1_system(sr_max=0.0)


def twin_unit_system() -> PowerSystem:
    """Two identical units whose commitment optima tie; one RES, one hour."""
    make = lambda uid: _unit(uid, "b1", p_min=10, p_max=100, cost=20.0,
                             startup=100.0, noload=50.0, sr_max=100.0)
    system = PowerSystem(
        buses=("b1", "b2"), thermal_units=(make("g1"), make("g2")),
        res_units=(RenewableUnit("w1", "b2"),),
        branches=(Branch("l1", "b1", "b2", 75.0, 0.1),),
        load_buses=("b1",), horizon_hours=1)
    return build_sensitivities(system, "b1")


def prop1_instances() -> list[tuple[PowerSystem, list[OperationScenario],
                                    np.ndarray, float]]:
    """Reserve-free instances for the equivalence oracle.

    Each entry is (system, scenarios, multiplier grid, lambda_w); the grids
    contain the continuum optimum exactly, so the brute force and the cut
    loop must agree.
    """
    grid = np.round(np.arange(0.0, 1.5001, 0.05), 10)
    out = []

    # one unit, one hour, one biased day
    sys_a = reserve_free_t1_system()
    day_a = OperationScenario(
        id="a1", raw_res_prediction=np.array([[60.0]]),
        raw_load_prediction=np.array([[80.0]]),
        actual_res=np.array([[30.0]]), actual_load=np.array([[80.0]]),
        raw_reserve=np.zeros((1, 2)))
    out.append((sys_a, [day_a], grid, 0.0))

    # two units with distinct marginal costs, one hour, two days
    sys_b = build_sensitivities(PowerSystem(
        buses=("b1", "b2"),
        thermal_units=(_unit("g1", "b1", p_min=10, p_max=80, cost=18.0,
                             startup=80.0, noload=40.0),
                       _unit("g2", "b1", p_min=5, p_max=60, cost=35.0,
                             startup=60.0, noload=25.0)),
        res_units=(RenewableUnit("w1", "b2"),),
        branches=(Branch("l1", "b1", "b2", 70.0, 0.1),),
        load_buses=("b1",), horizon_hours=1), "b1")
    days_b = [
        OperationScenario(
            id="b1", raw_res_prediction=np.array([[50.0]]),
            raw_load_prediction=np.array([[100.0]]),
            actual_res=np.array([[25.0]]), actual_load=np.array([[100.0]]),
            raw_reserve=np.zeros((1, 2))),
        OperationScenario(
            id="b2", raw_res_prediction=np.array([[64.0]]),
            raw_load_prediction=np.array([[110.0]]),
            actual_res=np.array([[32.0]]), actual_load=np.array([[110.0]]),
            raw_reserve=np.zeros((1, 2))),
    ]
    out.append((sys_b, days_b, grid, 0.0))

    # one unit, two decoupled hours, small L1 tilt on the multipliers
    sys_c = build_sensitivities(PowerSystem(
        buses=("b1", "b2"),
        thermal_units=(_unit("g1", "b1", p_min=10, p_max=100, cost=20.0,
                             startup=100.0, noload=50.0),),
        res_units=(RenewableUnit("w1", "b2"),),
        branches=(Branch("l1", "b1", "b2", 75.0, 0.1),),
        load_buses=("b1",), horizon_hours=2), "b1")
    day_c = OperationScenario(
        id="c1", raw_res_prediction=np.array([[60.0], [60.0]]),
        raw_load_prediction=np.array([[80.0], [80.0]]),
        actual_res=np.array([[30.0], [30.0]]),
        actual_load=np.array([[80.0], [80.0]]),
        raw_reserve=np.zeros((2, 2)))
    out.append((sys_c, [day_c], grid, 1.0))
    return out


def bias_week_system() -> PowerSystem:
    """Two-unit, two-hour system for the doubled-prediction training week."""
    system = PowerSystem(
        buses=("b1", "b2"),
        thermal_units=(_unit("g1", "b1", p_min=10, p_max=100, cost=20.0,
                             startup=100.0, noload=50.0, sr_max=40.0),
                       _unit("g2", "b1", p_min=5, p_max=60, cost=45.0,
                             startup=60.0, noload=30.0, sr_max=20.0)),
        res_units=(RenewableUnit("w1", "b2"),),
        branches=(Branch("l1", "b1", "b2", 90.0, 0.1),),
        load_buses=("b1",), horizon_hours=2)
    return build_sensitivities(system, "b1")


def bias_week_scenarios(days: int = 8) -> list[OperationScenario]:
    """Synthetic days whose raw RES prediction doubles the realization."""
    out = []
    for d in range(days):
        actual = np.array([[30.0 + 2.0 * (d % 4)], [24.0 + 1.5 * (d % 3)]])
        load = np.array([[100.0 + 3.0 * (d % 5)], [95.0 + 2.0 * (d % 4)]])
        out.append(OperationScenario(
            id=f"2024-01-{d + 1:02d}", raw_res_prediction=2.0 * actual,
            raw_load_prediction=load, actual_res=actual, actual_load=load,
            raw_reserve=np.zeros((2, 2))))
    return out


def slow_convergence_system() -> PowerSystem:
    """Two ramp-tight units over three coupled hours; the cut loop needs
    several enumerated patterns before the bounds close."""
    g0 = ThermalUnit(
        id="g0", bus="b1", quick_start=False, p_min=27.0, p_max=70.0,
        segments=(Segment(70.0, 26.0),), startup_cost=260.0, noload_cost=80.0,
        ramp_up=36.0, ramp_down=36.0, startup_ramp=36.0, shutdown_ramp=36.0,
        min_up=1, min_down=2, sr_max=20.0, nr_max=0.0,
        initial_status=InitialStatus())
    g1 = ThermalUnit(
        id="g1", bus="b1", quick_start=False, p_min=28.0, p_max=70.0,
        segments=(Segment(70.0, 21.0),), startup_cost=360.0, noload_cost=20.0,
        ramp_up=34.0, ramp_down=34.0, startup_ramp=34.0, shutdown_ramp=34.0,
        min_up=3, min_down=2, sr_max=30.0, nr_max=0.0,
        initial_status=InitialStatus())
    system = PowerSystem(
        buses=("b1", "b2"), thermal_units=(g0, g1),
        res_units=(RenewableUnit("w1", "b2"),),
        branches=(Branch("l1", "b1", "b2", 80.0, 0.1),),
        load_buses=("b1",), horizon_hours=3)
    return build_sensitivities(system, "b1")


def slow_convergence_scenario() -> OperationScenario:
    actual = np.array([[52.0], [53.0], [17.0]])
    return OperationScenario(
        id="slow", raw_res_prediction=2.0864299902344756 * actual,
        raw_load_prediction=np.array([[115.0], [119.0], [106.0]]),
        actual_res=actual,
        actual_load=np.array([[115.0], [119.0], [106.0]]),
        raw_reserve=np.zeros((3, 2)))


def reserve_scarce_system() -> PowerSystem:
    """Cheap base unit without spinning reserve plus an expensive
    quick-start unit; over-predicting RES forces non-spinning deployment
    and shedding, under-predicting only curtails."""
    system = PowerSystem(
        buses=("b1", "b2"),
        thermal_units=(_unit("g1", "b1", p_min=20, p_max=120, cost=20.0,
                             startup=100.0, noload=50.0, sr_max=0.0),
                       _unit("g2", "b1", p_min=5, p_max=30, cost=80.0,
                             startup=200.0, noload=20.0, quick_start=True,
                             sr_max=0.0, nr_max=30.0)),
        res_units=(RenewableUnit("w1", "b2"),),
        branches=(Branch("l1", "b1", "b2", 80.0, 0.1),),
        load_buses=("b1",), horizon_hours=1)
    return build_sensitivities(system, "b1")


def reserve_scarce_scenario() -> OperationScenario:
    return OperationScenario(
        id="scarce", raw_res_prediction=np.array([[40.0]]),
        raw_load_prediction=np.array([[100.0]]),
        actual_res=np.array([[40.0]]), actual_load=np.array([[100.0]]),
        raw_reserve=np.array([[0.0, 10.0]]))


def quickstart_t1_system() -> PowerSystem:
    """Fixture T1 plus a quick-start peaker able to carry non-spinning
    reserve."""
    system = PowerSystem(
        buses=("b1", "b2"),
        thermal_units=(_unit("g1", "b1", p_min=10, p_max=100, cost=20.0,
                             startup=100.0, noload=50.0, sr_max=100.0),
                       _unit("g2", "b1", p_min=5, p_max=40, cost=60.0,
                             startup=150.0, noload=15.0, quick_start=True,
                             sr_max=40.0, nr_max=40.0)),
        res_units=(RenewableUnit("w1", "b2"),),
        branches=(Branch("l1", "b1", "b2", 75.0, 0.1),),
        load_buses=("b1",), horizon_hours=1)
    return build_sensitivities(system, "b1")
