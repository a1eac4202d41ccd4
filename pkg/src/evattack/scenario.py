"""
Scenario configuration: parsing, validation, materialisation and execution.

A scenario is one JSON file.  Relative paths inside it resolve against the
file's directory; ``bundled:<name>`` refers to data shipped with the package.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackSpec, make_hooks
from .engine import SolverConfig, ValleyProblem, build_problem, objective, run, total_load
from .errors import ConfigError, EvAttackError
from .feeder import (AdjacencyMatrices, BaselineLoad, FeederModel, baseline_voltage,
                     build_adjacency, bundled_path, load_feeder, read_baseline_csv)
from .fleet import Fleet, generate_fleet, load_fleet
from .metrics import RunReport

log = logging.getLogger(__name__)

# Relative spot-load weights of the IEEE 13-node buses in bundled order
# (632, 633, 634, 645, 646, 671, 692, 675, 684, 611, 652, 680).
IEEE13_SHARES = (200.0, 0.0, 400.0, 170.0, 230.0, 1155.0, 170.0, 843.0, 0.0, 170.0, 128.0, 0.0)

# Keys left out of the config echo so that reports do not depend on them.
_VOLATILE = ("workers", "output", "trace")


@dataclass(frozen=True)
class BaselineParams:
    """Valley-shaped aggregate curve: evening peak, overnight valley, morning rise.

    The aggregate falls from ``peak_kw`` at the first step to ``valley_kw``
    after ``valley_after_h`` hours along a half cosine, then climbs back to
    ``morning_kw`` at the horizon end.  It is split over buses by ``shares``
    and perturbed by seeded multiplicative noise.
    """

    peak_kw: float = 300.0
    valley_kw: float = 170.0
    morning_kw: float = 205.0
    valley_after_h: float = 8.5
    power_factor: float = 0.95
    noise: float = 0.0
    scale: float = 1.0
    seed: int = 0
    shares: tuple | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "BaselineParams":
        data = dict(data)
        if data.get("shares") is not None:
            data["shares"] = tuple(float(v) for v in data["shares"])
        return cls(**data)


def synthetic_baseline(params: BaselineParams, n: int, T: int, dt: float) -> BaselineLoad:
    u = np.arange(T) * dt
    span = T * dt
    h = min(params.valley_after_h, span)
    fall = params.valley_kw + (params.peak_kw - params.valley_kw) * (1 + np.cos(np.pi * u / h)) / 2
    if span > h:
        rise = params.valley_kw + (params.morning_kw - params.valley_kw) \
            * (1 - np.cos(np.pi * (u - h) / (span - h))) / 2
    else:
        rise = fall
    level = np.where(u <= h, fall, rise)

    if params.shares is not None:
        shares = np.asarray(params.shares, dtype=float)
    elif n == len(IEEE13_SHARES):
        shares = np.asarray(IEEE13_SHARES)
    else:
        shares = np.ones(n)
    if shares.shape != (n,) or shares.sum() <= 0:
        raise ConfigError([f"baseline shares must be {n} non-negative weights with positive sum"])
    p = np.outer(shares / shares.sum(), level)
    if params.noise > 0:
        rng = np.random.Generator(np.random.PCG64(params.seed))
        p = p * (1.0 + params.noise * rng.standard_normal(p.shape))
    p = np.maximum(p, 0.0) * params.scale
    q = p * np.tan(np.arccos(params.power_factor))
    return BaselineLoad(p=p, q=q)


@dataclass
class ScenarioConfig:
    name: str
    feeder: str
    T: int
    dt: float
    fleet: dict
    baseline: dict
    solver: SolverConfig
    attacks: list[AttackSpec] = field(default_factory=list)
    variants: dict[str, list[AttackSpec]] = field(default_factory=dict)
    output: str | None = None
    trace: bool = False
    workers: int = 1
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ScenarioConfig":
        try:
            horizon = data["horizon"]
            solver = SolverConfig(**data["solver"])
            attacks = [AttackSpec.from_dict(a) for a in data.get("attacks", [])]
            variants = {k: [AttackSpec.from_dict(a) for a in v]
                        for k, v in data.get("variants", {}).items()}
            return cls(name=data.get("name", "scenario"), feeder=data["feeder"],
                       T=int(horizon["T"]), dt=float(horizon["dt"]),
                       fleet=data["fleet"], baseline=data["baseline"], solver=solver,
                       attacks=attacks, variants=variants, output=data.get("output"),
                       trace=bool(data.get("trace", False)),
                       workers=int(data.get("workers", 1)), base_dir=Path(base_dir),
                       raw=copy.deepcopy(data))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError([f"malformed scenario: {exc!r}"]) from exc

    def resolve(self, ref: str) -> Path:
        if ref.startswith("bundled:"):
            return bundled_path(ref.split(":", 1)[1])
        p = Path(ref)
        return p if p.is_absolute() else self.base_dir / p

    def echo(self) -> dict:
        return {k: v for k, v in self.raw.items() if k not in _VOLATILE}

    def with_attacks(self, attacks: list[AttackSpec], name: str | None = None) -> "ScenarioConfig":
        """Copy differing only in the attack section (and name)."""
        raw = copy.deepcopy(self.raw)
        raw["attacks"] = [a.to_dict() for a in attacks]
        raw.pop("variants", None)
        if name is not None:
            raw["name"] = name
        return ScenarioConfig.from_dict(raw, self.base_dir)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    return ScenarioConfig.from_dict(data, path.parent)


def bundled_scenario(name: str) -> ScenarioConfig:
    """Load one of the shipped scenarios by stem, e.g. ``"attack-free"``."""
    return load_config(bundled_path(f"scenarios/{name}.json"))


@dataclass
class Scenario:
    config: ScenarioConfig
    feeder: FeederModel
    adj: AdjacencyMatrices
    fleet: Fleet
    baseline: BaselineLoad
    problem: ValleyProblem


def build_fleet(config: ScenarioConfig) -> Fleet:
    spec = config.fleet
    if "file" in spec:
        return load_fleet(config.resolve(spec["file"]), config.dt, config.T)
    g = dict(spec["generator"])
    per_node = {int(k): int(v) for k, v in g.pop("per_node").items()}
    seed = int(g.pop("seed"))
    for key in ("capacity", "soc_ini", "soc_des"):
        if key in g:
            g[key] = tuple(g[key])
    return generate_fleet(per_node, seed, config.dt, config.T, **g)


def build_baseline(config: ScenarioConfig, n: int) -> BaselineLoad:
    spec = config.baseline
    if "file" in spec:
        return read_baseline_csv(config.resolve(spec["file"]), n=n)
    return synthetic_baseline(BaselineParams.from_dict(spec["synthetic"]), n, config.T, config.dt)


def validate(config: ScenarioConfig) -> list[str]:
    """All violations found in ``config``; an empty list means valid."""
    errors: list[str] = []
    feeder = adj = fleet = baseline = None
    try:
        feeder = load_feeder(config.resolve(config.feeder))
        adj = build_adjacency(feeder)
    except (OSError, EvAttackError, ValueError, KeyError) as exc:
        errors.append(f"feeder: {exc}")
    for section in (config.fleet, config.baseline):
        if "file" in section and not config.resolve(section["file"]).exists():
            errors.append(f"missing file {section['file']}")
    if config.T < 1 or config.dt <= 0:
        errors.append("horizon needs T >= 1 and dt > 0")
    try:
        fleet = build_fleet(config)
    except (OSError, EvAttackError, ValueError, KeyError, TypeError) as exc:
        errors.append(f"fleet: {exc}")
    if fleet is not None:
        for i in fleet.infeasible():
            errors.append(f"fleet: EV {i} needs K={fleet.targets[i]:.3f} full-power steps "
                          f"but the horizon has {config.T}")
        if feeder is not None:
            bad = sorted({int(b) for b in fleet.nodes if not 1 <= b <= feeder.n})
            if bad:
                errors.append(f"fleet: EV nodes {bad} outside 1..{feeder.n}")
    if feeder is not None:
        try:
            baseline = build_baseline(config, feeder.n)
            if baseline.T != config.T or baseline.n != feeder.n:
                errors.append(f"baseline is {baseline.n} x {baseline.T}, "
                              f"expected {feeder.n} x {config.T}")
            elif adj is not None:
                # charging only lowers voltages, so the baseline alone must respect the floor
                y_d = baseline_voltage(adj, baseline, feeder.v0, feeder.s_base)
                floor = config.solver.v_min ** 2 * feeder.v0 ** 2
                if y_d.min() < floor:
                    b, t = np.unravel_index(int(np.argmin(y_d)), y_d.shape)
                    errors.append(f"baseline: bus {b + 1} at step {t} is already below v_min "
                                  f"({np.sqrt(max(y_d[b, t], 0.0)):.4f} p.u.)")
        except (OSError, EvAttackError, ValueError, KeyError, TypeError) as exc:
            errors.append(f"baseline: {exc}")
    s = fleet.s if fleet is not None else None
    seen: set[int] = set()
    for group in [config.attacks] + list(config.variants.values()):
        seen = set()
        for spec in group:
            errors.extend(f"attack: {m}" for m in spec.problems(config.solver.eps, config.T, s))
            dup = seen & set(spec.attackers)
            if dup:
                errors.append(f"attack: agents {sorted(dup)} in more than one spec")
            seen |= set(spec.attackers)
    if config.workers < 1:
        errors.append("workers must be at least 1")
    return errors


def prepare(config: ScenarioConfig) -> Scenario:
    errors = validate(config)
    if errors:
        raise ConfigError(errors)
    feeder = load_feeder(config.resolve(config.feeder))
    adj = build_adjacency(feeder)
    fleet = build_fleet(config)
    baseline = build_baseline(config, feeder.n)
    problem = build_problem(feeder, fleet, baseline, config.solver.v_min, adj)
    return Scenario(config, feeder, adj, fleet, baseline, problem)


def execute(config: ScenarioConfig, workers: int | None = None, trace_path=None,
            scenario: Scenario | None = None, callback=None) -> RunReport:
    """Validate, solve and package one scenario run."""
    sc = scenario if scenario is not None else prepare(config)
    problem = sc.problem
    hooks = make_hooks(config.attacks, problem.T)
    res = run(problem, config.solver, hooks=hooks,
              workers=workers if workers is not None else config.workers,
              callback=callback, trace_path=trace_path)

    C = res.profiles
    y = problem.y_d + problem.sensitivity @ C
    hook_audit = []
    for a in sorted(res.hooks):
        h = res.hooks[a]
        entry = h.audit()
        entry["snapshot_row"] = (h.stealth.snapshot[a].tolist()
                                 if h.stealth.snapshot is not None else None)
        hook_audit.append(entry)
    attack = {
        "specs": [spec.to_dict() for spec in config.attacks],
        "hooks": hook_audit,
        "wiretap_log": [list(e) for e in res.wiretap.log],
    }
    return RunReport(
        name=config.name,
        converged=res.converged,
        criterion=res.criterion,
        iterations=res.iterations,
        profiles=C,
        baseline=problem.baseline,
        p_max=problem.p_max,
        targets=problem.targets,
        energy_required=sc.fleet.energy_required,
        energy_delivered=sc.fleet.delivered_energy(C),
        total_load=total_load(C, problem.baseline, problem.p_max),
        voltages=np.sqrt(np.maximum(y, 0.0)),
        objective=objective(C, problem.baseline, problem.p_max),
        residuals=list(res.state.residuals),
        objectives=list(res.state.objectives),
        dual=res.dual,
        attack=attack,
        config=config.echo(),
    )
