"""Power-system domain types, file ingestion, and flow sensitivities.

The system file is JSON with top-level keys ``buses``, ``thermal_units``,
``res_units``, ``branches``, ``load_buses``, ``horizon_hours``.  Branches
carry a reactance; :func:`build_sensitivities` turns reactances into
power-transfer-distribution-factor rows used by the DC flow constraints.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np


class ValidationError(ValueError):
    """Input data violates a documented invariant; message names the first."""


class NetworkError(ValueError):
    """The branch graph is unusable (disconnected or singular)."""


@dataclass(frozen=True)
class Segment:
    width_mw: float
    cost_per_mwh: float


@dataclass(frozen=True)
class InitialStatus:
    committed: bool = False
    output_mw: float = 0.0


@dataclass(frozen=True)
class ThermalUnit:
    id: str
    bus: str
    quick_start: bool
    p_min: float
    p_max: float
    segments: tuple[Segment, ...]
    startup_cost: float
    noload_cost: float
    ramp_up: float
    ramp_down: float
    startup_ramp: float
    shutdown_ramp: float
    min_up: int
    min_down: int
    sr_max: float
    nr_max: float
    initial_status: InitialStatus = InitialStatus()

    def validate(self) -> None:
        if self.p_min < 0:
            raise ValidationError(f"unit {self.id}: p_min must be >= 0")
        if self.p_max < self.p_min:
            raise ValidationError(f"unit {self.id}: p_max < p_min")
        if not self.segments:
            raise ValidationError(f"unit {self.id}: needs at least one segment")
        width = sum(s.width_mw for s in self.segments)
        if not math.isclose(width, self.p_max, rel_tol=1e-9, abs_tol=1e-6):
            raise ValidationError(
                f"unit {self.id}: segment widths sum to {width}, not p_max {self.p_max}")
        costs = [s.cost_per_mwh for s in self.segments]
        if any(b < a for a, b in zip(costs, costs[1:])):
            raise ValidationError(
                f"unit {self.id}: segment costs must be nondecreasing")
        if self.min_up < 1 or self.min_down < 1:
            raise ValidationError(f"unit {self.id}: min_up/min_down must be >= 1")
        if self.sr_max < 0 or self.nr_max < 0:
            raise ValidationError(f"unit {self.id}: reserve limits must be >= 0")


@dataclass(frozen=True)
class RenewableUnit:
    id: str
    bus: str


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    capacity_mw: float
    reactance: float = 0.0
    sensitivity_row: tuple[float, ...] | None = None

    def validate(self, n_buses: int) -> None:
        if self.capacity_mw <= 0:
            raise ValidationError(f"branch {self.id}: capacity_mw must be > 0")
        if self.sensitivity_row is not None and len(self.sensitivity_row) != n_buses:
            raise ValidationError(
                f"branch {self.id}: sensitivity row length != number of buses")


@dataclass(frozen=True)
class PowerSystem:
    buses: tuple[str, ...]
    thermal_units: tuple[ThermalUnit, ...]
    res_units: tuple[RenewableUnit, ...]
    branches: tuple[Branch, ...]
    load_buses: tuple[str, ...]
    horizon_hours: int = 24

    def validate(self) -> None:
        if self.horizon_hours < 1:
            raise ValidationError("horizon_hours must be >= 1")
        if not self.thermal_units:
            raise ValidationError("system needs at least one thermal unit")
        bus_set = set(self.buses)
        if len(bus_set) != len(self.buses):
            raise ValidationError("duplicate bus id")
        seen: set[str] = set()
        for u in self.thermal_units:
            u.validate()
            if u.id in seen:
                raise ValidationError(f"duplicate unit id {u.id}")
            seen.add(u.id)
            if u.bus not in bus_set:
                raise ValidationError(f"unit {u.id}: unknown bus {u.bus}")
        res_seen: set[str] = set()
        for r in self.res_units:
            if r.id in res_seen:
                raise ValidationError(f"duplicate RES id {r.id}")
            res_seen.add(r.id)
            if r.bus not in bus_set:
                raise ValidationError(f"RES {r.id}: unknown bus {r.bus}")
        for b in self.branches:
            b.validate(len(self.buses))
            if b.from_bus not in bus_set or b.to_bus not in bus_set:
                raise ValidationError(f"branch {b.id}: unknown endpoint bus")
        for q in self.load_buses:
            if q not in bus_set:
                raise ValidationError(f"load bus {q} not declared")

    def bus_index(self) -> dict[str, int]:
        return {b: i for i, b in enumerate(self.buses)}

    @property
    def n_thermal(self) -> int:
        return len(self.thermal_units)

    @property
    def n_res(self) -> int:
        return len(self.res_units)


def _unit_from_dict(d: dict) -> ThermalUnit:
    init = d.get("initial_status", {})
    return ThermalUnit(
        id=str(d["id"]), bus=str(d["bus"]),
        quick_start=bool(d.get("quick_start", False)),
        p_min=float(d["p_min"]), p_max=float(d["p_max"]),
        segments=tuple(Segment(float(s["width_mw"]), float(s["cost_per_mwh"]))
                       for s in d["segments"]),
        startup_cost=float(d["startup_cost"]), noload_cost=float(d["noload_cost"]),
        ramp_up=float(d["ramp_up"]), ramp_down=float(d["ramp_down"]),
        startup_ramp=float(d["startup_ramp"]), shutdown_ramp=float(d["shutdown_ramp"]),
        min_up=int(d["min_up"]), min_down=int(d["min_down"]),
        sr_max=float(d["sr_max"]), nr_max=float(d["nr_max"]),
        initial_status=InitialStatus(bool(init.get("committed", False)),
                                     float(init.get("output_mw", 0.0))),
    )


def load_system(path: str) -> PowerSystem:
    """Load and validate a power system from a JSON file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed system file {path}: {exc}") from exc
    try:
        system = PowerSystem(
            buses=tuple(str(b) for b in raw["buses"]),
            thermal_units=tuple(_unit_from_dict(d) for d in raw["thermal_units"]),
            res_units=tuple(RenewableUnit(str(d["id"]), str(d["bus"]))
                            for d in raw.get("res_units", [])),
            branches=tuple(
                Branch(str(d["id"]), str(d["from_bus"]), str(d["to_bus"]),
                       float(d["capacity_mw"]), float(d.get("reactance", 0.0)),
                       tuple(float(x) for x in d["sensitivity_row"])
                       if d.get("sensitivity_row") is not None else None)
                for d in raw.get("branches", [])),
            load_buses=tuple(str(q) for q in raw.get("load_buses", [])),
            horizon_hours=int(raw.get("horizon_hours", 24)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"system file {path} missing field: {exc}") from exc
    system.validate()
    return system


def save_system(system: PowerSystem, path: str) -> None:
    """Serialize a system back to the JSON schema accepted by load_system."""
    doc = {
        "buses": list(system.buses),
        "horizon_hours": system.horizon_hours,
        "load_buses": list(system.load_buses),
        "thermal_units": [
            {
                "id": u.id, "bus": u.bus, "quick_start": u.quick_start,
                "p_min": u.p_min, "p_max": u.p_max,
                "segments": [{"width_mw": s.width_mw, "cost_per_mwh": s.cost_per_mwh}
                             for s in u.segments],
                "startup_cost": u.startup_cost, "noload_cost": u.noload_cost,
                "ramp_up": u.ramp_up, "ramp_down": u.ramp_down,
                "startup_ramp": u.startup_ramp, "shutdown_ramp": u.shutdown_ramp,
                "min_up": u.min_up, "min_down": u.min_down,
                "sr_max": u.sr_max, "nr_max": u.nr_max,
                "initial_status": {"committed": u.initial_status.committed,
                                   "output_mw": u.initial_status.output_mw},
            }
            for u in system.thermal_units
        ],
        "res_units": [{"id": r.id, "bus": r.bus} for r in system.res_units],
        "branches": [
            {k: v for k, v in {
                "id": b.id, "from_bus": b.from_bus, "to_bus": b.to_bus,
                "capacity_mw": b.capacity_mw, "reactance": b.reactance,
                "sensitivity_row": list(b.sensitivity_row)
                if b.sensitivity_row is not None else None,
            }.items() if v is not None}
            for b in system.branches
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _check_connected(system: PowerSystem) -> None:
    if not system.branches:
        if len(system.buses) > 1:
            raise NetworkError("multiple buses but no branches")
        return
    adjacency: dict[str, set[str]] = {b: set() for b in system.buses}
    for br in system.branches:
        adjacency[br.from_bus].add(br.to_bus)
        adjacency[br.to_bus].add(br.from_bus)
    seen = {system.buses[0]}
    stack = [system.buses[0]]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != len(system.buses):
        missing = sorted(set(system.buses) - seen)
        raise NetworkError(f"network disconnected; unreachable buses: {missing}")


def build_sensitivities(system: PowerSystem, reference_bus: str | None = None) -> PowerSystem:
    """Fill branch sensitivity rows with PTDFs w.r.t. a reference bus.

    Flows are ``flow_b = sum_n ptdf[b, n] * injection_n`` under the DC
    approximation; the reference-bus column is zero.
    """
    if not system.branches:
        return system
    _check_connected(system)
    idx = system.bus_index()
    ref = reference_bus if reference_bus is not None else system.buses[0]
    if ref not in idx:
        raise ValidationError(f"unknown reference bus {ref}")
    n = len(system.buses)
    m = len(system.branches)
    incidence = np.zeros((m, n))
    susceptance = np.zeros(m)
    for k, br in enumerate(system.branches):
        if br.reactance == 0.0:
            raise ValidationError(f"branch {br.id}: reactance required for PTDF")
        incidence[k, idx[br.from_bus]] = 1.0
        incidence[k, idx[br.to_bus]] = -1.0
        susceptance[k] = 1.0 / br.reactance
    b_matrix = incidence.T @ np.diag(susceptance) @ incidence
    keep = [i for i in range(n) if i != idx[ref]]
    reduced = b_matrix[np.ix_(keep, keep)]
    try:
        inv = np.linalg.inv(reduced)
    except np.linalg.LinAlgError as exc:
        raise NetworkError(f"singular reduced susceptance matrix: {exc}") from exc
    ptdf = np.zeros((m, n))
    ptdf[:, keep] = np.diag(susceptance) @ incidence[:, keep] @ inv
    branches = tuple(replace(br, sensitivity_row=tuple(float(x) for x in ptdf[k]))
                     for k, br in enumerate(system.branches))
    return replace(system, branches=branches)


def rule_of_thumb_reserve(load_forecast: np.ndarray, alpha: float) -> np.ndarray:
    """Size hourly reserve as a load fraction, split half spinning half not.

    ``load_forecast`` is (T, |Q|); returns (T, 2) with columns (SR, NR).
    Total reserve per hour is ``alpha * total load``; the split is exactly
    50/50, which meets the at-least-half-spinning practice with equality.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must be within [0, 1]")
    load = np.asarray(load_forecast, dtype=float)
    if load.ndim != 2:
        raise ValidationError("load_forecast must be (T, |Q|)")
    total = alpha * load.sum(axis=1)
    return np.column_stack([total / 2.0, total / 2.0])
