"""Operation scenarios: one day's predictions and realizations.

Scenario files are CSV with one row per (date, hour): columns ``date``,
``hour``, then ``res_raw_<id>`` / ``res_actual_<id>`` per RES unit,
``load_pred_<id>`` / ``load_actual_<id>`` per load bus, and optional
``reserve_sr`` / ``reserve_nr``.  When the reserve columns are absent the
requirement is sized by the rule of thumb at the given load fraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .system import PowerSystem, ValidationError, rule_of_thumb_reserve

DEFAULT_RESERVE_FRACTION = 0.5


@dataclass(frozen=True)
class OperationScenario:
    """Raw predictions and realizations for one operating day.

    Arrays are (T, |J|) for RES, (T, |Q|) for load, and (T, 2) for the
    (SR, NR) reserve requirement.
    """

    id: str
    raw_res_prediction: np.ndarray
    raw_load_prediction: np.ndarray
    actual_res: np.ndarray
    actual_load: np.ndarray
    raw_reserve: np.ndarray

    def __post_init__(self) -> None:
        t = self.raw_load_prediction.shape[0]
        for name in ("raw_res_prediction", "raw_load_prediction",
                     "actual_res", "actual_load", "raw_reserve"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != t:
                raise ValidationError(f"scenario {self.id}: {name} shape {arr.shape}")
            if np.any(arr < 0):
                raise ValidationError(f"scenario {self.id}: negative value in {name}")
            arr.setflags(write=False)
        if self.raw_res_prediction.shape != self.actual_res.shape:
            raise ValidationError(f"scenario {self.id}: RES shapes differ")
        if self.raw_load_prediction.shape != self.actual_load.shape:
            raise ValidationError(f"scenario {self.id}: load shapes differ")
        if self.raw_reserve.shape[1] != 2:
            raise ValidationError(f"scenario {self.id}: reserve must be (T, 2)")

    @property
    def horizon(self) -> int:
        return self.raw_load_prediction.shape[0]

    @property
    def features_res(self) -> np.ndarray:
        """RES predictor features: the raw per-unit prediction itself."""
        return self.raw_res_prediction

    @property
    def features_reserve(self) -> np.ndarray:
        """Reserve predictor features: hourly aggregate (RES pred, load pred)."""
        return np.column_stack([self.raw_res_prediction.sum(axis=1)
                                if self.raw_res_prediction.size else
                                np.zeros(self.horizon),
                                self.raw_load_prediction.sum(axis=1)])


def load_scenarios(path: str, system: PowerSystem,
                   reserve_fraction: float = DEFAULT_RESERVE_FRACTION
                   ) -> list[OperationScenario]:
    """Read a scenario CSV into one OperationScenario per day block."""
    frame = pd.read_csv(path)
    required = ["date", "hour"]
    res_raw = [f"res_raw_{r.id}" for r in system.res_units]
    res_act = [f"res_actual_{r.id}" for r in system.res_units]
    load_pred = [f"load_pred_{q}" for q in system.load_buses]
    load_act = [f"load_actual_{q}" for q in system.load_buses]
    for col in required + res_raw + res_act + load_pred + load_act:
        if col not in frame.columns:
            raise ValidationError(f"scenario file missing column {col!r}")
    has_reserve = "reserve_sr" in frame.columns and "reserve_nr" in frame.columns

    t_hours = system.horizon_hours
    scenarios = []
    for date, block in frame.groupby("date", sort=True):
        hours = sorted(block["hour"].astype(int).tolist())
        expected = list(range(1, t_hours + 1))
        if hours != expected:
            missing = sorted(set(expected) - set(hours))
            raise ValidationError(
                f"scenario {date}: missing or duplicate hours {missing or hours}")
        block = block.sort_values("hour")

        def grab(cols: list[str]) -> np.ndarray:
            if not cols:
                return np.zeros((t_hours, 0))
            arr = block[cols].to_numpy(dtype=float)
            if np.any(~np.isfinite(arr)):
                raise ValidationError(f"scenario {date}: non-finite value")
            if np.any(arr < 0):
                raise ValidationError(f"scenario {date}: negative value")
            return arr

        load_p = grab(load_pred)
        if has_reserve:
            reserve = grab(["reserve_sr", "reserve_nr"])
        else:
            reserve = rule_of_thumb_reserve(load_p, reserve_fraction)
        scenarios.append(OperationScenario(
            id=str(date),
            raw_res_prediction=grab(res_raw),
            raw_load_prediction=load_p,
            actual_res=grab(res_act),
            actual_load=grab(load_act),
            raw_reserve=reserve,
        ))
    return scenarios


def save_scenarios(path: str, scenarios: list[OperationScenario],
                   system: PowerSystem) -> None:
    """Write scenarios back to the CSV schema accepted by load_scenarios."""
    rows = []
    for sc in scenarios:
        for t in range(sc.horizon):
            row: dict[str, object] = {"date": sc.id, "hour": t + 1}
            for j, r in enumerate(system.res_units):
                row[f"res_raw_{r.id}"] = sc.raw_res_prediction[t, j]
                row[f"res_actual_{r.id}"] = sc.actual_res[t, j]
            for q, bus in enumerate(system.load_buses):
                row[f"load_pred_{bus}"] = sc.raw_load_prediction[t, q]
                row[f"load_actual_{bus}"] = sc.actual_load[t, q]
            row["reserve_sr"] = sc.raw_reserve[t, 0]
            row["reserve_nr"] = sc.raw_reserve[t, 1]
            rows.append(row)
    pd.DataFrame(rows).to_csv(path, index=False)
