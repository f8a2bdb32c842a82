import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copo.system import (
    Branch,
    NetworkError,
    PowerSystem,
    ValidationError,
    build_sensitivities,
    load_system,
    rule_of_thumb_reserve,
    save_system,
)
from copo.toysystems import _unit

DATA = Path(__file__).parent / "data"

MINIMAL = {
    "buses": ["b1"],
    "horizon_hours": 1,
    "load_buses": ["b1"],
    "thermal_units": [{
        "id": "g1", "bus": "b1", "quick_start": False,
        "p_min": 10.0, "p_max": 100.0,
        "segments": [{"width_mw": 100.0, "cost_per_mwh": 20.0}],
        "startup_cost": 100.0, "noload_cost": 50.0,
        "ramp_up": 100.0, "ramp_down": 100.0,
        "startup_ramp": 100.0, "shutdown_ramp": 100.0,
        "min_up": 1, "min_down": 1, "sr_max": 100.0, "nr_max": 0.0,
    }],
}


def write(tmp_path, doc):
    path = tmp_path / "system.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_minimal_system(tmp_path):
    system = load_system(write(tmp_path, MINIMAL))
    assert system.n_thermal == 1
    assert system.n_res == 0
    assert len(system.branches) == 0


def test_segment_width_mismatch_names_unit(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["thermal_units"][0]["segments"][0]["width_mw"] = 99.0
    with pytest.raises(ValidationError, match="g1"):
        load_system(write(tmp_path, doc))


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{ nope")
    with pytest.raises(ValidationError, match="malformed"):
        load_system(str(path))


def test_fourteen_bus_fixture_counts():
    system = load_system(str(DATA / "system14.json"))
    assert len(system.buses) == 14
    assert len(system.branches) == 20
    assert system.n_thermal == 5
    assert system.n_res == 2
    assert system.horizon_hours == 24


def test_round_trip_identity(tmp_path):
    system = load_system(str(DATA / "system14.json"))
    out = tmp_path / "again.json"
    save_system(system, str(out))
    assert load_system(str(out)) == system

    with_rows = build_sensitivities(system, "b1")
    save_system(with_rows, str(out))
    assert load_system(str(out)) == with_rows


def test_invariant_messages(tmp_path):
    cases = [
        (("thermal_units", 0, "p_min"), -1.0, "p_min"),
        (("thermal_units", 0, "min_up"), 0, "min_up"),
        (("thermal_units", 0, "sr_max"), -5.0, "reserve"),
        (("load_buses", 0), "nowhere", "load bus"),
    ]
    for path_keys, value, needle in cases:
        doc = json.loads(json.dumps(MINIMAL))
        target = doc
        for key in path_keys[:-1]:
            target = target[key]
        target[path_keys[-1]] = value
        with pytest.raises(ValidationError, match=needle):
            load_system(write(tmp_path, doc))


def test_decreasing_segment_costs_rejected(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["thermal_units"][0]["segments"] = [
        {"width_mw": 50.0, "cost_per_mwh": 30.0},
        {"width_mw": 50.0, "cost_per_mwh": 20.0},
    ]
    with pytest.raises(ValidationError, match="nondecreasing"):
        load_system(write(tmp_path, doc))


def radial_system():
    return PowerSystem(
        buses=("b1", "b2"),
        thermal_units=(_unit("g1", "b1", p_min=0, p_max=10, cost=1.0,
                             startup=0.0, noload=0.0),),
        res_units=(), branches=(Branch("l1", "b1", "b2", 10.0, 0.2),),
        load_buses=("b2",), horizon_hours=1)


def test_radial_sensitivity_is_unit():
    system = build_sensitivities(radial_system(), "b1")
    row = system.branches[0].sensitivity_row
    assert row[0] == pytest.approx(0.0)
    assert abs(row[1]) == pytest.approx(1.0)


def test_triangle_sensitivity_pattern():
    system = PowerSystem(
        buses=("b1", "b2", "b3"),
        thermal_units=(_unit("g1", "b1", p_min=0, p_max=10, cost=1.0,
                             startup=0.0, noload=0.0),),
        res_units=(),
        branches=(Branch("a", "b1", "b2", 10.0, 0.3),
                  Branch("b", "b2", "b3", 10.0, 0.3),
                  Branch("c", "b1", "b3", 10.0, 0.3)),
        load_buses=("b3",), horizon_hours=1)
    built = build_sensitivities(system, "b1")
    # hand solution of the equal-reactance triangle: injection at b2 splits
    # 2/3 over the direct path and 1/3 around
    magnitudes = sorted(abs(b.sensitivity_row[1]) for b in built.branches)
    assert magnitudes == pytest.approx([1 / 3, 1 / 3, 2 / 3])


def test_disconnected_network_is_rejected():
    system = PowerSystem(
        buses=("b1", "b2", "b3", "b4"),
        thermal_units=(_unit("g1", "b1", p_min=0, p_max=10, cost=1.0,
                             startup=0.0, noload=0.0),),
        res_units=(),
        branches=(Branch("a", "b1", "b2", 10.0, 0.3),
                  Branch("b", "b3", "b4", 10.0, 0.3)),
        load_buses=(), horizon_hours=1)
    with pytest.raises(NetworkError, match="disconnected"):
        build_sensitivities(system, "b1")


def test_flows_match_direct_dc_solve(rng):
    """PTDF flows reproduce the angle-formulation solve on random trees
    plus chords (<= 5 buses)."""
    for _ in range(10):
        n = int(rng.integers(2, 6))
        edges = [(int(rng.integers(0, k)), k) for k in range(1, n)]
        extra = int(rng.integers(0, 3))
        for _ in range(extra):
            a, b = rng.choice(n, size=2, replace=False)
            edges.append((int(min(a, b)), int(max(a, b))))
        reactance = rng.uniform(0.05, 0.4, len(edges))
        system = PowerSystem(
            buses=tuple(f"b{i}" for i in range(n)),
            thermal_units=(_unit("g1", "b0", p_min=0, p_max=10, cost=1.0,
                                 startup=0.0, noload=0.0),),
            res_units=(),
            branches=tuple(Branch(f"l{k}", f"b{a}", f"b{b}", 99.0,
                                  float(reactance[k]))
                           for k, (a, b) in enumerate(edges)),
            load_buses=(), horizon_hours=1)
        built = build_sensitivities(system, "b0")

        injection = rng.uniform(-5.0, 5.0, n)
        injection[0] -= injection.sum()
        # independent oracle: solve B theta = P, flows from angle differences
        m = len(edges)
        incidence = np.zeros((m, n))
        for k, (a, b) in enumerate(edges):
            incidence[k, a], incidence[k, b] = 1.0, -1.0
        laplacian = incidence.T @ np.diag(1.0 / reactance) @ incidence
        theta = np.zeros(n)
        theta[1:] = np.linalg.solve(laplacian[1:, 1:], injection[1:])
        oracle = (1.0 / reactance) * (incidence @ theta)

        ptdf_flows = np.array([
            sum(br.sensitivity_row[i] * injection[i] for i in range(n))
            for br in built.branches])
        assert ptdf_flows == pytest.approx(oracle, abs=1e-9)


class TestRuleOfThumb:
    def test_paper_operating_point(self):
        reserve = rule_of_thumb_reserve(np.array([[452.8]]), 0.5)
        assert reserve[0, 0] == pytest.approx(113.2)
        assert reserve[0, 1] == pytest.approx(113.2)

    def test_zero_alpha(self):
        assert np.all(rule_of_thumb_reserve(np.array([[100.0]]), 0.0) == 0.0)

    def test_arithmetic(self):
        reserve = rule_of_thumb_reserve(np.array([[60.0, 40.0]]), 0.3)
        assert reserve[0, 0] == pytest.approx(15.0)
        assert reserve[0, 1] == pytest.approx(15.0)

    def test_alpha_range(self):
        with pytest.raises(ValidationError):
            rule_of_thumb_reserve(np.array([[1.0]]), 1.5)

    @settings(max_examples=30, deadline=None)
    @given(load=st.floats(0.0, 1e4), alpha=st.floats(0.0, 1.0),
           scale=st.floats(0.0, 10.0))
    def test_linearity(self, load, alpha, scale):
        base = rule_of_thumb_reserve(np.array([[load]]), alpha)
        scaled = rule_of_thumb_reserve(np.array([[load * scale]]), alpha)
        assert scaled == pytest.approx(base * scale, rel=1e-9, abs=1e-9)
