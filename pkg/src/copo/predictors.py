"""Affine cost-oriented predictors for RES availability and reserves.

The RES predictor scales each raw per-unit hourly prediction by a trainable
nonnegative multiplier.  The reserve predictor maps the hourly aggregate raw
RES prediction and load prediction to an hourly requirement.  Two reserve
mappings are supported:

* ``split`` (default, 2 columns): a single total requirement per hour,
  divided equally between spinning and non-spinning reserve;
* ``independent`` (4 columns): spinning and non-spinning requirements with
  their own coefficient pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .system import ValidationError

RESERVE_SPLIT = "split"
RESERVE_INDEPENDENT = "independent"
_N_COLS = {RESERVE_SPLIT: 2, RESERVE_INDEPENDENT: 4}


@dataclass(frozen=True)
class AffinePredictorPair:
    """Trainable multipliers: ``res`` is (T, |J|), ``reserve`` is (T, 2 or 4)."""

    res: np.ndarray
    reserve: np.ndarray
    reserve_mode: str = RESERVE_SPLIT
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "res", np.asarray(self.res, dtype=float))
        object.__setattr__(self, "reserve", np.asarray(self.reserve, dtype=float))
        if self.reserve_mode not in _N_COLS:
            raise ValidationError(f"unknown reserve mode {self.reserve_mode!r}")
        if self.res.ndim != 2:
            raise ValidationError("res multipliers must be (T, |J|)")
        if self.reserve.ndim != 2 or self.reserve.shape[1] != _N_COLS[self.reserve_mode]:
            raise ValidationError(
                f"reserve multipliers must be (T, {_N_COLS[self.reserve_mode]})")
        if self.res.shape[0] != self.reserve.shape[0]:
            raise ValidationError("res and reserve multipliers disagree on horizon")
        if np.any(self.res < 0) or np.any(self.reserve < 0):
            raise ValidationError("predictor multipliers must be nonnegative")
        self.res.setflags(write=False)
        self.reserve.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.res.shape[0]

    @property
    def n_res(self) -> int:
        return self.res.shape[1]


def identity_pair(horizon: int, n_res: int, alpha: float = 0.5,
                  reserve_mode: str = RESERVE_SPLIT) -> AffinePredictorPair:
    """Pair that reproduces the raw predictions: unit RES multipliers and a
    reserve map replicating the rule-of-thumb sizing at fraction ``alpha``."""
    if reserve_mode == RESERVE_SPLIT:
        reserve = np.tile([0.0, alpha], (horizon, 1))
    else:
        reserve = np.tile([0.0, alpha / 2.0, 0.0, alpha / 2.0], (horizon, 1))
    return AffinePredictorPair(np.ones((horizon, n_res)), reserve, reserve_mode)


def predict_res(pair: AffinePredictorPair, features: np.ndarray) -> np.ndarray:
    """Tailored RES prediction: elementwise product of multipliers and the
    raw prediction."""
    features = np.asarray(features, dtype=float)
    if features.shape != pair.res.shape:
        raise ValidationError(
            f"RES feature shape {features.shape} != multipliers {pair.res.shape}")
    return pair.res * features


def predict_reserve(pair: AffinePredictorPair, features: np.ndarray) -> np.ndarray:
    """Tailored hourly (SR, NR) requirement from aggregate features.

    ``features`` is (T, 2): hourly aggregate raw RES prediction and hourly
    aggregate load prediction.
    """
    features = np.asarray(features, dtype=float)
    if features.shape != (pair.horizon, 2):
        raise ValidationError(
            f"reserve feature shape {features.shape} != ({pair.horizon}, 2)")
    n = pair.reserve
    if pair.reserve_mode == RESERVE_SPLIT:
        total = n[:, 0] * features[:, 0] + n[:, 1] * features[:, 1]
        return np.column_stack([total / 2.0, total / 2.0])
    sr = n[:, 0] * features[:, 0] + n[:, 1] * features[:, 1]
    nr = n[:, 2] * features[:, 0] + n[:, 3] * features[:, 1]
    return np.column_stack([sr, nr])


def save_predictor(pair: AffinePredictorPair, path: str) -> None:
    """Persist a pair as JSON; coefficients are decimal strings so the
    round-trip is bit-exact."""
    doc = {
        "horizon": pair.horizon,
        "res_count": pair.n_res,
        "reserve_mode": pair.reserve_mode,
        "m": [[repr(float(v)) for v in row] for row in pair.res],
        "n": [[repr(float(v)) for v in row] for row in pair.reserve],
        "metadata": pair.metadata,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_predictor(path: str) -> AffinePredictorPair:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed predictor file {path}: {exc}") from exc
    try:
        res = np.array([[float(v) for v in row] for row in doc["m"]], dtype=float)
        reserve = np.array([[float(v) for v in row] for row in doc["n"]], dtype=float)
        pair = AffinePredictorPair(res.reshape(int(doc["horizon"]), int(doc["res_count"])),
                                   reserve, str(doc.get("reserve_mode", RESERVE_SPLIT)),
                                   dict(doc.get("metadata", {})))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"predictor file {path} missing field: {exc}") from exc
    return pair
