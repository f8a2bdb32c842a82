"""Experiment orchestration: configuration, the weekly rolling scheme, and
report files.

Configuration is flat ``key = value`` text with dotted sections.  Every key
can be overridden by an environment variable (``train.lambda_w`` becomes
``COPO_TRAIN_LAMBDA_W``) and by command-line options.  Evaluation walks the
requested date range in 7-day blocks, retrains the predictors on the
preceding window at each block boundary, runs every requested method per
day, and emits one CSV row per (day, method) plus a per-method summary.
"""

from __future__ import annotations

import datetime as _dt
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (
    EvaluationRecord,
    asymmetry_experiment,
    generate_scenarios,
    metric_ei,
    metric_voi,
    reduce_scenarios,
    run_method,
    run_open_loop_record,
    run_perfect,
    run_prescriptive_uc,
    solve_tsp,
)
from .operation import Penalties
from .predictors import (
    RESERVE_SPLIT,
    AffinePredictorPair,
    identity_pair,
    save_predictor,
)
from .scenarios import OperationScenario, load_scenarios
from .system import PowerSystem, build_sensitivities, load_system
from .training import CcgState, TrainingConfig, train

KNOWN_METHODS = ("O-PO", "P-PO", "C-PO", "C-PO-R", "C-PO-W", "T-SP")

DEFAULTS: dict[str, str] = {
    "system": "",
    "scenarios": "",
    "out": "out",
    "reference_bus": "",
    "methods": "O-PO",
    "seed": "0",
    "workers": "1",
    "dates.start": "",
    "dates.end": "",
    "reserve.alpha": "0.5",
    "penalty.shed": "2000",
    "penalty.surplus": "2000",
    "penalty.branch": "2000",
    "solver.backend": "highs",
    "solver.gap": "0.01",
    "solver.time_limit": "",
    "solver.big_m_primal": "1e5",
    "solver.big_m_dual": "1e5",
    "train.window_days": "7",
    "train.lambda_w": "1e6",
    "train.lambda_r": "1e6",
    "train.gap_target": "0.01",
    "train.max_iterations": "30",
    "train.sp2_tolerance": "",
    "train.reserve_mode": RESERVE_SPLIT,
    "train.force_identity": "false",
    "train.weekend_split": "false",
    "tsp.scenarios": "4",
    "tsp.samples": "100",
    "tsp.band": "0.2",
    "asymmetry.errors": "0.1,0.2,0.3",
    "verify.kkt_count": "50",
    "verify.big_m_primal": "1e5",
    "verify.big_m_dual": "1e5",
    "verify.pattern_cap": "4096",
    "verify.prop1_horizon": "",
}


class ConfigError(ValueError):
    """Bad configuration file or key."""


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def env_key(key: str) -> str:
    return "COPO_" + key.upper().replace(".", "_")


def resolve_config(path: str | None = None,
                   overrides: dict[str, str] | None = None) -> dict[str, str]:
    """Defaults, then file, then COPO_* environment, then explicit overrides."""
    merged = dict(DEFAULTS)
    if path:
        merged.update(parse_config_text(Path(path).read_text()))
    for key in DEFAULTS:
        env = os.environ.get(env_key(key))
        if env is not None:
            merged[key] = env
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            merged[key] = str(value)
    return merged


def _as_float(mapping: dict[str, str], key: str) -> float:
    try:
        return float(mapping[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number: {mapping[key]!r}") from exc


def _as_int(mapping: dict[str, str], key: str) -> int:
    try:
        return int(mapping[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not an integer: {mapping[key]!r}") from exc


def _as_bool(mapping: dict[str, str], key: str) -> bool:
    value = mapping[key].strip().lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off", ""):
        return False
    raise ConfigError(f"{key}: not a boolean: {mapping[key]!r}")


@dataclass
class RunConfig:
    """Typed view of a resolved configuration mapping."""

    system_path: str
    scenario_path: str
    out_dir: str
    reference_bus: str | None
    methods: list[str]
    seed: int
    workers: int
    date_start: str
    date_end: str
    alpha: float
    penalties: Penalties
    solver_gap: float
    solver_backend: str
    time_limit: float | None
    window_days: int
    lambda_w: float
    lambda_r: float
    gap_target: float
    max_iterations: int
    sp2_tolerance: float | None
    reserve_mode: str
    force_identity: bool
    weekend_split: bool
    big_m_primal: float
    big_m_dual: float
    tsp_scenarios: int
    tsp_samples: int
    tsp_band: float
    asymmetry_errors: list[float]
    verify_kkt_count: int
    verify_big_m_primal: float
    verify_big_m_dual: float
    verify_pattern_cap: int
    verify_prop1_horizon: int | None
    raw: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "RunConfig":
        from .milp import _BACKENDS

        methods = [m.strip().upper() for m in mapping["methods"].split(",")
                   if m.strip()]
        for m in methods:
            if m not in KNOWN_METHODS:
                raise ConfigError(
                    f"unknown method {m!r}; known: {', '.join(KNOWN_METHODS)}")
        if mapping["solver.backend"] not in _BACKENDS:
            raise ConfigError(
                f"unknown solver backend {mapping['solver.backend']!r}; "
                f"available: {', '.join(sorted(_BACKENDS))}")
        return cls(
            system_path=mapping["system"],
            scenario_path=mapping["scenarios"],
            out_dir=mapping["out"],
            reference_bus=mapping["reference_bus"] or None,
            methods=methods,
            seed=_as_int(mapping, "seed"),
            workers=max(1, _as_int(mapping, "workers")),
            date_start=mapping["dates.start"],
            date_end=mapping["dates.end"],
            alpha=_as_float(mapping, "reserve.alpha"),
            penalties=Penalties(_as_float(mapping, "penalty.shed"),
                                _as_float(mapping, "penalty.surplus"),
                                _as_float(mapping, "penalty.branch")),
            solver_gap=_as_float(mapping, "solver.gap"),
            solver_backend=mapping["solver.backend"],
            time_limit=(_as_float(mapping, "solver.time_limit")
                        if mapping["solver.time_limit"] else None),
            window_days=_as_int(mapping, "train.window_days"),
            lambda_w=_as_float(mapping, "train.lambda_w"),
            lambda_r=_as_float(mapping, "train.lambda_r"),
            gap_target=_as_float(mapping, "train.gap_target"),
            max_iterations=_as_int(mapping, "train.max_iterations"),
            sp2_tolerance=(_as_float(mapping, "train.sp2_tolerance")
                           if mapping["train.sp2_tolerance"] else None),
            reserve_mode=mapping["train.reserve_mode"],
            force_identity=_as_bool(mapping, "train.force_identity"),
            weekend_split=_as_bool(mapping, "train.weekend_split"),
            big_m_primal=_as_float(mapping, "solver.big_m_primal"),
            big_m_dual=_as_float(mapping, "solver.big_m_dual"),
            tsp_scenarios=_as_int(mapping, "tsp.scenarios"),
            tsp_samples=_as_int(mapping, "tsp.samples"),
            tsp_band=_as_float(mapping, "tsp.band"),
            asymmetry_errors=[float(v) for v in
                              mapping["asymmetry.errors"].split(",") if v.strip()],
            verify_kkt_count=_as_int(mapping, "verify.kkt_count"),
            verify_big_m_primal=_as_float(mapping, "verify.big_m_primal"),
            verify_big_m_dual=_as_float(mapping, "verify.big_m_dual"),
            verify_pattern_cap=_as_int(mapping, "verify.pattern_cap"),
            verify_prop1_horizon=(_as_int(mapping, "verify.prop1_horizon")
                                  if mapping["verify.prop1_horizon"] else None),
            raw=dict(mapping),
        )

    def training_config(self, *, train_res: bool = True,
                        train_reserve: bool = True) -> TrainingConfig:
        return TrainingConfig(
            lambda_w=self.lambda_w, lambda_r=self.lambda_r,
            gap_target=self.gap_target, max_iterations=self.max_iterations,
            big_m_primal=self.big_m_primal, big_m_dual=self.big_m_dual,
            solver_gap=self.solver_gap, time_limit=self.time_limit,
            sp2_tolerance=self.sp2_tolerance, reserve_mode=self.reserve_mode,
            train_res=train_res, train_reserve=train_reserve,
            penalties=self.penalties, alpha=self.alpha)


def load_inputs(config: RunConfig) -> tuple[PowerSystem, list[OperationScenario]]:
    if not config.system_path:
        raise ConfigError("config key 'system' is required")
    if not config.scenario_path:
        raise ConfigError("config key 'scenarios' is required")
    system = load_system(config.system_path)
    if system.branches and any(b.sensitivity_row is None for b in system.branches):
        system = build_sensitivities(system, config.reference_bus)
    scenarios = load_scenarios(config.scenario_path, system, config.alpha)
    scenarios.sort(key=lambda sc: sc.id)
    return system, scenarios


def _select_targets(scenarios: list[OperationScenario], start: str, end: str
                    ) -> list[int]:
    out = []
    for idx, sc in enumerate(scenarios):
        if start and sc.id < start:
            continue
        if end and sc.id > end:
            continue
        out.append(idx)
    return out


def _missing_dates(scenarios: list[OperationScenario], first_target_idx: int,
                   window: int) -> list[str]:
    """Names of the absent lookback days, when day ids parse as dates."""
    have = first_target_idx
    missing = window - have
    try:
        first = _dt.date.fromisoformat(scenarios[first_target_idx].id)
        return [str(first - _dt.timedelta(days=k))
                for k in range(have + 1, window + 1)]
    except ValueError:
        return [f"<{missing} earlier days>"]


class InsufficientHistoryError(ValueError):
    pass


def _is_weekend(day_id: str) -> bool:
    try:
        return _dt.date.fromisoformat(day_id).weekday() >= 5
    except ValueError:
        raise ConfigError(
            f"weekend split needs ISO-date day ids, got {day_id!r}") from None


def _train_window(scenarios: list[OperationScenario], first_target_idx: int,
                  window: int) -> list[OperationScenario]:
    if first_target_idx < window:
        missing = _missing_dates(scenarios, first_target_idx, window)
        raise InsufficientHistoryError(
            f"need {window} training days before "
            f"{scenarios[first_target_idx].id}, have {first_target_idx}; "
            f"missing {', '.join(missing)}")
    return scenarios[first_target_idx - window:first_target_idx]


@dataclass
class TrainOutput:
    predictor_path: Path
    log_path: Path
    state: CcgState
    pair: AffinePredictorPair


def cmd_train(config: RunConfig, *, train_res: bool = True,
              train_reserve: bool = True) -> TrainOutput:
    """Train predictors on the window preceding the first target day."""
    system, scenarios = load_inputs(config)
    targets = _select_targets(scenarios, config.date_start, config.date_end)
    if not targets:
        raise ConfigError("no target days inside the configured date range")
    window = _train_window(scenarios, targets[0], config.window_days)
    pair, state = train(system, window,
                        config.training_config(train_res=train_res,
                                               train_reserve=train_reserve))
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    predictor_path = out_dir / "predictor.json"
    save_predictor(pair, str(predictor_path))
    log_path = out_dir / "training_log.csv"
    _write_csv(log_path,
               ["iteration", "lower_bound", "upper_bound", "gap",
                "wall_seconds", "cuts_total"],
               state.log_rows(), timestamp=False)
    return TrainOutput(predictor_path, log_path, state, pair)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.10g}"
    return str(value)


def _write_csv(path: Path, columns: list[str], rows: list[dict],
               timestamp: bool = True) -> None:
    lines = []
    if timestamp:
        lines.append(f"# generated {_dt.datetime.now().isoformat()}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row.get(col)) for col in columns))
    path.write_text("\n".join(lines) + "\n")


EVALUATION_COLUMNS = [
    "day", "method", "startup", "no_load", "ed_startup_noload",
    "ed_generation", "ed_slack", "total", "ei_pct", "voi",
    "sr_avg_mw", "nr_avg_mw", "input_hash",
]


def _base_tag(method: str) -> str:
    """Roster name of an output tag, e.g. C-PO-7-R -> C-PO-R."""
    if method.startswith("T-SP"):
        return "T-SP"
    if method.startswith("C-PO"):
        return "C-PO-" + method.rsplit("-", 1)[1] \
            if method.endswith(("-R", "-W")) else "C-PO"
    return method


def _tsp_record(system: PowerSystem, scenario: OperationScenario,
                config: RunConfig, day_index: int) -> EvaluationRecord:
    res_pred = scenario.raw_res_prediction
    load_pred = scenario.raw_load_prediction
    band = config.tsp_band
    sset = generate_scenarios(
        ((1.0 - band) * res_pred, (1.0 + band) * res_pred),
        ((1.0 - band) * load_pred, (1.0 + band) * load_pred),
        config.tsp_samples, config.seed + day_index)
    sset = reduce_scenarios(sset, config.tsp_scenarios)
    plan, _, _ = solve_tsp(system, res_pred, load_pred, sset,
                           config.penalties, gap=config.solver_gap,
                           time_limit=config.time_limit)
    return run_method(system, scenario, f"T-SP-{config.tsp_scenarios}",
                      res_pred, scenario.raw_reserve, config.penalties,
                      gap=config.solver_gap, plan=plan)


def _day_records(args) -> list[EvaluationRecord | Exception]:
    (system, scenario, methods, pairs, config, day_index) = args
    needs_opo = True
    needs_ppo = "P-PO" in methods or any(m.startswith("C-PO") for m in methods)
    records: dict[str, EvaluationRecord | Exception] = {}

    def attempt(tag: str, fn):
        try:
            records[tag] = fn()
        except Exception as exc:  # per-day isolation: a bad day must not abort
            records[tag] = exc

    if needs_opo:
        attempt("O-PO", lambda: run_open_loop_record(
            system, scenario, config.penalties, gap=config.solver_gap))
    if needs_ppo:
        attempt("P-PO", lambda: run_perfect(
            system, scenario, config.penalties, gap=config.solver_gap))
    nt = config.window_days
    for method in methods:
        if method == "C-PO":
            attempt(method, lambda: run_prescriptive_uc(
                system, pairs["C-PO"], scenario, config.penalties,
                gap=config.solver_gap, method=f"C-PO-{nt}"))
        elif method == "C-PO-R":
            attempt(method, lambda: run_prescriptive_uc(
                system, pairs["C-PO-R"], scenario, config.penalties,
                gap=config.solver_gap, method=f"C-PO-{nt}-R", use_res=False))
        elif method == "C-PO-W":
            attempt(method, lambda: run_prescriptive_uc(
                system, pairs["C-PO-W"], scenario, config.penalties,
                gap=config.solver_gap, method=f"C-PO-{nt}-W",
                use_reserve=False))
        elif method == "T-SP":
            attempt(method, lambda: _tsp_record(system, scenario, config,
                                                day_index))
    ordered = []
    for tag in ("O-PO", "P-PO"):
        if tag in records:
            ordered.append(records[tag])
    for method in methods:
        if method not in ("O-PO", "P-PO") and method in records:
            ordered.append(records[method])
    return ordered


@dataclass
class EvaluateOutput:
    evaluation_path: Path
    summary_path: Path
    records: list[EvaluationRecord]
    failures: list[tuple[str, str]]
    summary: list[dict]


def cmd_evaluate(config: RunConfig) -> EvaluateOutput:
    """Rolling evaluation: train per 7-day block, evaluate every method."""
    system, scenarios = load_inputs(config)
    targets = _select_targets(scenarios, config.date_start, config.date_end)
    if not targets:
        raise ConfigError("no target days inside the configured date range")
    cpo_methods = [m for m in config.methods if m.startswith("C-PO")]

    tasks = []
    for block_start in range(0, len(targets), 7):
        block = targets[block_start:block_start + 7]
        # one predictor pair per method per block; with the weekend split,
        # one per (method, day class) trained on the matching window days
        pairs: dict[tuple[str, bool], AffinePredictorPair] = {}
        for method in cpo_methods:
            if config.force_identity:
                pair = identity_pair(system.horizon_hours, system.n_res,
                                     config.alpha, config.reserve_mode)
                pairs[method, False] = pairs[method, True] = pair
                continue
            window = _train_window(scenarios, block[0], config.window_days)
            training = config.training_config(
                train_res=method != "C-PO-R",
                train_reserve=method != "C-PO-W")
            if not config.weekend_split:
                pair, _ = train(system, window, training)
                pairs[method, False] = pairs[method, True] = pair
                continue
            for weekend in (False, True):
                if not any(_is_weekend(scenarios[idx].id) == weekend
                           for idx in block):
                    continue
                subset = [sc for sc in window if _is_weekend(sc.id) == weekend]
                if not subset:
                    raise InsufficientHistoryError(
                        f"weekend split: no {'weekend' if weekend else 'weekday'}"
                        f" days in the window before {scenarios[block[0]].id}")
                pair, _ = train(system, subset, training)
                pairs[method, weekend] = pair
        for idx in block:
            day_pairs = {method: pairs[method,
                                       _is_weekend(scenarios[idx].id)
                                       if config.weekend_split else False]
                         for method in cpo_methods}
            tasks.append((system, scenarios[idx], config.methods, day_pairs,
                          config, idx))

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_day = list(pool.map(_day_records, tasks))
    else:
        per_day = [_day_records(task) for task in tasks]

    records: list[EvaluationRecord] = []
    failures: list[tuple[str, str]] = []
    anchors: dict[str, dict[str, float]] = {}
    for task, outputs in zip(tasks, per_day):
        day = task[1].id
        anchors.setdefault(day, {})
        for item in outputs:
            if isinstance(item, Exception):
                failures.append((day, f"{type(item).__name__}: {item}"))
                continue
            records.append(item)
            if item.method in ("O-PO", "P-PO"):
                anchors[day][item.method] = item.actual_cost

    rows = []
    requested = set(config.methods)
    for record in records:
        if _base_tag(record.method) not in requested:
            continue
        day_anchor = anchors.get(record.day, {})
        ei = voi = None
        opo = day_anchor.get("O-PO")
        ppo = day_anchor.get("P-PO")
        if opo:
            ei = metric_ei(opo, record.actual_cost)
            if ppo is not None and opo != ppo:
                voi = metric_voi(opo, record.actual_cost, ppo)
        row = {"day": record.day, "method": record.method}
        row.update(record.report.as_row())
        row["ei_pct"] = ei
        row["voi"] = voi
        row["sr_avg_mw"] = float(np.mean(record.sr_scheduled))
        row["nr_avg_mw"] = float(np.mean(record.nr_scheduled))
        row["input_hash"] = record.input_hash
        rows.append(row)
    rows.sort(key=lambda r: (r["day"], r["method"]))

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation_path = out_dir / "evaluation.csv"
    _write_csv(evaluation_path, EVALUATION_COLUMNS, rows)

    summary = []
    methods_seen = sorted({row["method"] for row in rows})
    for method in methods_seen:
        sub = [row for row in rows if row["method"] == method]
        eis = [row["ei_pct"] for row in sub if row["ei_pct"] is not None]
        vois = [row["voi"] for row in sub if row["voi"] is not None]
        summary.append({
            "method": method,
            "days": len(sub),
            "avg_total": float(np.mean([row["total"] for row in sub])),
            "avg_ei_pct": float(np.mean(eis)) if eis else None,
            "avg_voi": float(np.mean(vois)) if vois else None,
        })
    summary_path = out_dir / "summary.csv"
    _write_csv(summary_path,
               ["method", "days", "avg_total", "avg_ei_pct", "avg_voi"],
               summary)
    if failures:
        _write_csv(out_dir / "failures.csv", ["day", "error"],
                   [{"day": d, "error": e} for d, e in failures])
    return EvaluateOutput(evaluation_path, summary_path, records, failures,
                          summary)


@dataclass
class AsymmetryOutput:
    table_path: Path
    over_slope: float
    under_slope: float


def cmd_asymmetry(config: RunConfig) -> AsymmetryOutput:
    """Signed prediction-error sweep on the first target day."""
    system, scenarios = load_inputs(config)
    targets = _select_targets(scenarios, config.date_start, config.date_end)
    if not targets:
        raise ConfigError("no target days inside the configured date range")
    scenario = scenarios[targets[0]]
    magnitudes = sorted({abs(e) for e in config.asymmetry_errors if e != 0})
    grid = [-m for m in reversed(magnitudes)] + [0.0] + magnitudes
    result = asymmetry_experiment(system, scenario, np.array(grid),
                                  config.penalties)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "asymmetry.csv"
    _write_csv(table_path, ["signed_error_pct", "mape_pct", "loss_pct"],
               result.rows())
    return AsymmetryOutput(table_path, result.over_slope, result.under_slope)
