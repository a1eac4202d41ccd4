"""
Post-run analytics: load and voltage traces, valley flatness, stealthiness and
paired attacked/attack-free comparisons.  Also owns the RunReport JSON layout
and the CSV trace files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackSpec, deviation_bound_audit
from .engine import objective as _objective
from .engine import total_load as _total_load
from .errors import DimensionMismatch, EmptyWindow, ScenarioMismatch


def total_load(profiles, baseline, p_max) -> np.ndarray:
    """Aggregate feeder load in kW."""
    return _total_load(profiles, baseline, p_max)


def flatness(load, window=None) -> dict:
    """Spread of ``load`` over ``window`` (a slice, range or index array)."""
    load = np.asarray(load, dtype=float)
    seg = load if window is None else load[window]
    if seg.size == 0:
        raise EmptyWindow("flatness window is empty")
    mean = float(seg.mean())
    return {"max_minus_min": float(seg.max() - seg.min()),
            "rel_std": float(seg.std() / mean) if mean else 0.0}


def charging_window(profiles, p_max, threshold: float = 0.0) -> slice:
    """From the first step where EV load exceeds ``threshold`` times the total charger
    capacity to the end of the horizon."""
    p_max = np.asarray(p_max, dtype=float)
    ev = p_max @ np.asarray(profiles)
    hits = np.flatnonzero(ev > threshold * p_max.sum())
    if hits.size == 0:
        raise EmptyWindow("EV load never exceeds the detection threshold")
    return slice(int(hits[0]), ev.size)


@dataclass
class RunReport:
    """Result of one scenario run; every trace is recomputable from ``profiles``."""

    name: str
    converged: bool
    criterion: str
    iterations: int
    profiles: np.ndarray
    baseline: np.ndarray
    p_max: np.ndarray
    targets: np.ndarray
    energy_required: np.ndarray
    energy_delivered: np.ndarray
    total_load: np.ndarray
    voltages: np.ndarray        # n x T magnitudes (p.u.)
    objective: float
    residuals: list
    objectives: list
    dual: np.ndarray
    attack: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    _ARRAYS = ("profiles", "baseline", "p_max", "targets", "energy_required",
               "energy_delivered", "total_load", "voltages", "dual")

    @property
    def attack_specs(self) -> list[AttackSpec]:
        return [AttackSpec.from_dict(d) for d in self.attack.get("specs", [])]

    @property
    def snapshots(self) -> dict[int, np.ndarray]:
        return {int(h["agent"]): np.asarray(h["snapshot_row"])
                for h in self.attack.get("hooks", []) if h.get("snapshot_row") is not None}

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        data = dict(data)
        for k in cls._ARRAYS:
            data[k] = np.asarray(data[k], dtype=float)
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write(self, out_dir) -> Path:
        """Write ``report.json`` and the CSV traces into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        T = self.total_load.size
        _write_csv(out / "load.csv", ["t", "baseline", "total"],
                   ([t, self.baseline[t], self.total_load[t]] for t in range(T)))
        _write_csv(out / "voltage.csv", ["bus", "t", "magnitude"],
                   ([b + 1, t, self.voltages[b, t]]
                    for b in range(self.voltages.shape[0]) for t in range(T)))
        _write_csv(out / "profiles.csv", ["ev", "t", "rate"],
                   ([i, t, self.profiles[i, t]]
                    for i in range(self.profiles.shape[0]) for t in range(T)))
        _write_csv(out / "residuals.csv", ["k", "residual", "objective"],
                   ([k + 1, r, f] for k, (r, f) in enumerate(zip(self.residuals, self.objectives))))
        return out / "report.json"


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def stealthiness(attacked, attack_free) -> float:
    """Distance ``||C_hat - C*||_F`` between two runs' profiles."""
    a = attacked.profiles if hasattr(attacked, "profiles") else np.asarray(attacked)
    b = attack_free.profiles if hasattr(attack_free, "profiles") else np.asarray(attack_free)
    if a.shape != b.shape:
        raise DimensionMismatch(f"profile shapes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


@dataclass
class ComparisonReport:
    name: str
    zeta: float
    objective_delta: float
    objective_delta_pct: float
    load_deviation: list
    load_deviation_pct: list
    max_load_deviation: float
    voltage_deviation: list     # per bus, max over time (p.u.)
    max_voltage_deviation: float
    bound: dict | None

    def to_dict(self) -> dict:
        return asdict(self)


def compare(attacked: RunReport, attack_free: RunReport, name: str | None = None,
            audit: bool = True) -> ComparisonReport:
    """Deviation of an attacked run from its attack-free twin.

    Percentages are relative to the attack-free quantity.  The deviation bound
    is audited against the attack-free objective and raises BoundViolated if
    it fails.
    """
    if attacked.profiles.shape != attack_free.profiles.shape \
            or attacked.voltages.shape != attack_free.voltages.shape \
            or not np.allclose(attacked.baseline, attack_free.baseline):
        raise ScenarioMismatch("attacked and attack-free runs describe different scenarios")
    dload = attacked.total_load - attack_free.total_load
    dvolt = np.abs(attacked.voltages - attack_free.voltages).max(axis=1)
    dobj = attacked.objective - attack_free.objective
    bound = None
    specs = attacked.attack_specs
    if audit and specs:
        bound = deviation_bound_audit(attacked.profiles, attacked.objective,
                                      attack_free.objective, specs, attacked.targets,
                                      attacked.profiles.shape[1], attacked.snapshots)
        bound["converged"] = bool(attacked.converged and attack_free.converged)
    return ComparisonReport(
        name=name or attacked.name,
        zeta=stealthiness(attacked, attack_free),
        objective_delta=dobj,
        objective_delta_pct=100.0 * dobj / attack_free.objective if attack_free.objective else 0.0,
        load_deviation=dload.tolist(),
        load_deviation_pct=(100.0 * dload / attack_free.total_load).tolist(),
        max_load_deviation=float(np.abs(dload).max()),
        voltage_deviation=dvolt.tolist(),
        max_voltage_deviation=float(dvolt.max()),
        bound=bound,
    )


def recompute_objective(report: RunReport) -> float:
    return _objective(report.profiles, report.baseline, report.p_max)
