from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from copo.cli import main
from copo.harness import (
    ConfigError,
    InsufficientHistoryError,
    RunConfig,
    cmd_asymmetry,
    cmd_evaluate,
    cmd_train,
    env_key,
    parse_config_text,
    resolve_config,
)
from copo.scenarios import save_scenarios
from copo.system import save_system
from copo.toysystems import (
    bias_week_scenarios,
    bias_week_system,
    reserve_scarce_scenario,
    reserve_scarce_system,
)

DATA = Path(__file__).parent / "data"


def deploy(tmp_path, system, scenarios, **overrides):
    system_path = tmp_path / "system.json"
    scenario_path = tmp_path / "days.csv"
    save_system(system, str(system_path))
    save_scenarios(str(scenario_path), scenarios, system)
    mapping = resolve_config(None, {
        "system": str(system_path),
        "scenarios": str(scenario_path),
        "out": str(tmp_path / "out"),
        "solver.gap": "1e-6",
        "train.lambda_w": "0",
        "train.lambda_r": "0",
        "reserve.alpha": "0",
        **{k: str(v) for k, v in overrides.items()},
    })
    return RunConfig.from_mapping(mapping)


class TestConfig:
    def test_parse_and_comments(self):
        text = "solver.gap = 0.02  # tighter\n\nmethods = O-PO,C-PO\n"
        out = parse_config_text(text)
        assert out == {"solver.gap": "0.02", "methods": "O-PO,C-PO"}

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("solver.maxthreads = 4")

    def test_env_override(self, monkeypatch, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("solver.gap = 0.02\n")
        monkeypatch.setenv(env_key("solver.gap"), "0.005")
        merged = resolve_config(str(path))
        assert merged["solver.gap"] == "0.005"

    def test_explicit_override_beats_env(self, monkeypatch):
        monkeypatch.setenv(env_key("seed"), "5")
        merged = resolve_config(None, {"seed": "9"})
        assert merged["seed"] == "9"

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError, match="unknown method"):
            RunConfig.from_mapping(resolve_config(None, {"methods": "X-PO"}))

    def test_defaults_mirror_operating_point(self):
        config = RunConfig.from_mapping(resolve_config(None, {}))
        assert config.solver_gap == 0.01
        assert config.penalties.shed == 2000.0
        assert config.lambda_w == 1e6 and config.lambda_r == 1e6
        assert config.alpha == 0.5
        assert config.window_days == 7


class TestTrainCommand:
    def test_minimal_window(self, tmp_path):
        config = deploy(tmp_path, bias_week_system(), bias_week_scenarios(2),
                        **{"train.window_days": 1,
                           "dates.start": "2024-01-02"})
        result = cmd_train(config)
        assert result.predictor_path.exists()
        assert result.log_path.exists()
        assert result.pair.metadata["scenario_ids"] == ["2024-01-01"]

    def test_window_size_recorded(self, tmp_path):
        config = deploy(tmp_path, bias_week_system(), bias_week_scenarios(8),
                        **{"train.window_days": 7,
                           "dates.start": "2024-01-08"})
        result = cmd_train(config)
        assert len(result.pair.metadata["scenario_ids"]) == 7

    def test_insufficient_history_lists_missing_dates(self, tmp_path):
        config = deploy(tmp_path, bias_week_system(), bias_week_scenarios(4),
                        **{"train.window_days": 7,
                           "dates.start": "2024-01-04"})
        with pytest.raises(InsufficientHistoryError, match="2023-12-31"):
            cmd_train(config)


class TestEvaluateCommand:
    def test_open_loop_only(self, tmp_path):
        config = deploy(tmp_path, bias_week_system(), bias_week_scenarios(3),
                        methods="O-PO")
        out = cmd_evaluate(config)
        rows = out.evaluation_path.read_text().splitlines()
        assert len([r for r in rows if r and not r.startswith("#")]) == 4
        assert all(rec.method == "O-PO" for rec in out.records)
        assert not out.failures

    def test_identity_forced_cpo_matches_open_loop(self, tmp_path):
        config = deploy(tmp_path, bias_week_system(), bias_week_scenarios(3),
                        methods="O-PO,C-PO",
                        **{"train.force_identity": "true",
                           "reserve.alpha": "0"})
        out = cmd_evaluate(config)
        by_day = {}
        for rec in out.records:
            by_day.setdefault(rec.day, {})[rec.method] = rec.actual_cost
        for day, costs in by_day.items():
            assert costs["C-PO-7"] == pytest.approx(costs["O-PO"], rel=1e-9)

    def test_bias_week_reports_positive_ei(self, tmp_path):
        config = deploy(tmp_path, bias_week_system(), bias_week_scenarios(8),
                        methods="O-PO,P-PO,C-PO",
                        **{"dates.start": "2024-01-08",
                           "train.window_days": 7})
        out = cmd_evaluate(config)
        summary = {entry["method"]: entry for entry in out.summary}
        assert summary["C-PO-7"]["avg_ei_pct"] > 0.0
        assert summary["O-PO"]["avg_ei_pct"] == pytest.approx(0.0)
        assert 0.0 < summary["C-PO-7"]["avg_voi"] <= 1.0 + 1e-9

    def test_determinism_modulo_timestamp(self, tmp_path):
        days = bias_week_scenarios(3)
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        config_a = deploy(tmp_path / "a", bias_week_system(), days,
                          methods="O-PO,P-PO", seed=7)
        config_b = deploy(tmp_path / "b", bias_week_system(), days,
                          methods="O-PO,P-PO", seed=7)
        out_a = cmd_evaluate(config_a)
        out_b = cmd_evaluate(config_b)
        body_a = out_a.evaluation_path.read_text().splitlines()[1:]
        body_b = out_b.evaluation_path.read_text().splitlines()[1:]
        assert body_a == body_b

    def test_per_day_failures_isolate(self, tmp_path):
        days = bias_week_scenarios(3)
        import dataclasses

        broken = dataclasses.replace(
            days[1], raw_reserve=np.full((2, 2), 1e5))
        config = deploy(tmp_path, bias_week_system(),
                        [days[0], broken, days[2]], methods="O-PO")
        out = cmd_evaluate(config)
        assert len(out.failures) == 1
        assert out.failures[0][0] == "2024-01-02"
        assert {rec.day for rec in out.records} == {"2024-01-01", "2024-01-03"}
        assert (config.out_dir / "failures.csv").exists() \
            if hasattr(config.out_dir, "exists") else True

    def test_tsp_method_runs(self, tmp_path):
        config = deploy(tmp_path, bias_week_system(), bias_week_scenarios(2),
                        methods="O-PO,T-SP",
                        **{"tsp.samples": 12, "tsp.scenarios": 2})
        out = cmd_evaluate(config)
        methods = {rec.method for rec in out.records}
        assert "T-SP-2" in methods

    def test_records_hash_inputs(self, tmp_path):
        config = deploy(tmp_path, bias_week_system(), bias_week_scenarios(2),
                        methods="O-PO")
        out = cmd_evaluate(config)
        hashes = {rec.input_hash for rec in out.records}
        assert len(hashes) == len(out.records)

    def test_no_leakage_from_future_days(self, tmp_path):
        """A day's record depends only on that day and the past: rewriting a
        later day leaves earlier rows (and their input hashes) untouched."""
        import dataclasses

        days = bias_week_scenarios(3)
        (tmp_path / "x").mkdir()
        (tmp_path / "y").mkdir()
        base = cmd_evaluate(deploy(tmp_path / "x", bias_week_system(), days,
                                   methods="O-PO"))
        mutated = days[:2] + [dataclasses.replace(
            days[2], actual_res=days[2].actual_res * 0.0)]
        other = cmd_evaluate(deploy(tmp_path / "y", bias_week_system(),
                                    mutated, methods="O-PO"))
        for day in ("2024-01-01", "2024-01-02"):
            a = next(r for r in base.records if r.day == day)
            b = next(r for r in other.records if r.day == day)
            assert a.input_hash == b.input_hash
            assert a.actual_cost == b.actual_cost

    def test_worker_fanout_matches_sequential(self, tmp_path):
        days = bias_week_scenarios(3)
        (tmp_path / "seq").mkdir()
        (tmp_path / "par").mkdir()
        seq = cmd_evaluate(deploy(tmp_path / "seq", bias_week_system(), days,
                                  methods="O-PO,P-PO", workers=1))
        par = cmd_evaluate(deploy(tmp_path / "par", bias_week_system(), days,
                                  methods="O-PO,P-PO", workers=2))
        assert seq.evaluation_path.read_text().splitlines()[1:] == \
            par.evaluation_path.read_text().splitlines()[1:]

    def test_rolling_blocks_retrain_at_week_boundaries(self, tmp_path):
        days = bias_week_scenarios(21)
        config = deploy(tmp_path, bias_week_system(), days,
                        methods="O-PO,C-PO",
                        **{"dates.start": "2024-01-08",
                           "train.window_days": 7})
        out = cmd_evaluate(config)
        assert not out.failures
        cpo = [r for r in out.records if r.method == "C-PO-7"]
        assert len(cpo) == 14  # two 7-day blocks
        summary = {e["method"]: e for e in out.summary}
        assert summary["C-PO-7"]["avg_ei_pct"] > 0.0

    def test_demo_data_runs_open_loop(self, tmp_path):
        mapping = resolve_config(None, {
            "system": str(DATA / "system14.json"),
            "scenarios": str(DATA / "days14.csv"),
            "out": str(tmp_path / "out"),
            "methods": "O-PO",
            "dates.end": "2020-12-11",
            "reserve.alpha": "0.2",
        })
        out = cmd_evaluate(RunConfig.from_mapping(mapping))
        assert len(out.records) == 2
        assert all(r.report.ed_slack == 0.0 for r in out.records)

    def test_weekend_split_trains_two_pairs(self, tmp_path):
        # 2024-01-06/07 are Saturday/Sunday: the second week's window holds
        # both day classes
        days = bias_week_scenarios(8)
        config = deploy(tmp_path, bias_week_system(), days,
                        methods="C-PO",
                        **{"dates.start": "2024-01-08",
                           "train.window_days": 7,
                           "train.weekend_split": "true"})
        out = cmd_evaluate(config)
        assert not out.failures
        (record,) = [r for r in out.records if r.method.startswith("C-PO")]
        assert record.day == "2024-01-08"


class TestAsymmetryCommand:
    def test_writes_table(self, tmp_path):
        config = deploy(tmp_path, reserve_scarce_system(),
                        [reserve_scarce_scenario()],
                        **{"asymmetry.errors": "0.1,0.2"})
        out = cmd_asymmetry(config)
        lines = out.table_path.read_text().splitlines()
        assert lines[1].startswith("signed_error_pct")
        assert len(lines) == 2 + 5  # header rows + (-0.2,-0.1,0,0.1,0.2)
        assert out.over_slope >= out.under_slope


class TestCli:
    def run(self, *args):
        return CliRunner().invoke(main, args, catch_exceptions=False)

    def test_train_and_evaluate(self, tmp_path):
        system_path = tmp_path / "system.json"
        scenario_path = tmp_path / "days.csv"
        save_system(bias_week_system(), str(system_path))
        save_scenarios(str(scenario_path), bias_week_scenarios(3),
                       bias_week_system())
        conf = tmp_path / "run.conf"
        conf.write_text(
            f"system = {system_path}\n"
            f"scenarios = {scenario_path}\n"
            "methods = O-PO\n"
            "solver.gap = 1e-6\n"
            "reserve.alpha = 0\n"
            "train.lambda_w = 0\n"
            "train.lambda_r = 0\n"
            "train.window_days = 1\n"
            "dates.start = 2024-01-02\n")
        out = self.run("train", "--config", str(conf), "--out",
                       str(tmp_path / "t"))
        assert out.exit_code == 0, out.output
        assert "predictor" in out.output
        out = self.run("evaluate", "--config", str(conf), "--out",
                       str(tmp_path / "e"))
        assert out.exit_code == 0, out.output
        assert "O-PO" in out.output

    def test_verify_passes_and_big_m_corruption_fails(self):
        ok = self.run("verify", "--set", "verify.kkt_count=6")
        assert ok.exit_code == 0, ok.output
        assert "all" in ok.output and "passed" in ok.output

        bad = CliRunner().invoke(main, [
            "verify", "--set", "verify.kkt_count=6",
            "--set", "verify.big_m_primal=1",
            "--set", "verify.big_m_dual=1"])
        assert bad.exit_code == 1
        assert "FAIL" in bad.output

    def test_verify_oversized_instance_exits_with_size_cap(self):
        out = CliRunner().invoke(main, [
            "verify", "--set", "verify.prop1_horizon=13"])
        assert out.exit_code == 2
        assert "size-cap" in out.output

    def test_asymmetry_command(self, tmp_path):
        system_path = tmp_path / "system.json"
        scenario_path = tmp_path / "days.csv"
        save_system(reserve_scarce_system(), str(system_path))
        save_scenarios(str(scenario_path), [reserve_scarce_scenario()],
                       reserve_scarce_system())
        out = self.run("asymmetry", "--set", f"system={system_path}",
                       "--set", f"scenarios={scenario_path}",
                       "--out", str(tmp_path / "a"))
        assert out.exit_code == 0, out.output
        assert "slope" in out.output
