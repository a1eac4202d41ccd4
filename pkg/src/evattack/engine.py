"""
Decentralised valley-filling solver (shrunken primal-dual subgradient).

One coordinator owns the voltage multipliers ``dual`` (n x T) and every agent
owns one charging profile (a row of the s x T ``profiles`` matrix).  Each
iteration the coordinator broadcasts the aggregate load and the multiplier
term ``D^T dual``; agents take a shrunken projected gradient step on their own
row, optionally perturbed by an attack hook; the coordinator then takes the
dual step.  Both updates read the same frozen snapshot of the previous
iterate.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import DimensionMismatch, NumericalDivergence, WiretapUnavailable
from .feeder import AdjacencyMatrices, BaselineLoad, FeederModel, baseline_voltage, \
    build_adjacency, build_sensitivity
from .fleet import Fleet, shrink_project

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    beta: float
    tau_c: float = 1.0
    tau_l: float = 1.0
    k_max: int = 1000
    eps: float = 1e-4
    lambda_max: float | None = None
    v_min: float = 0.954
    diminishing: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("step sizes must be non-negative")
        if not (0 < self.tau_c <= 1 and 0 < self.tau_l <= 1):
            raise ValueError("shrink factors must lie in (0, 1]")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.v_min < 1.1:
            raise ValueError("v_min must lie in (0, 1.1)")
        if self.k_max < 0:
            raise ValueError("k_max must be non-negative")
        if self.lambda_max is not None and self.lambda_max <= 0:
            raise ValueError("lambda_max must be positive when given")

    def steps(self, k: int) -> tuple[float, float]:
        if self.diminishing:
            d = math.sqrt(k + 1.0)
            return self.alpha / d, self.beta / d
        return self.alpha, self.beta


@dataclass(frozen=True)
class ValleyProblem:
    """Everything the solver needs, already reduced to arrays.

    Attributes
    ----------
    baseline : (T,) aggregate baseline load ``P_b`` in kW
    p_max : (s,) maximum charging power per EV in kW
    targets : (s,) required profile sums ``K_i``
    sensitivity : (n, s) matrix ``D``
    y_d : (n, T) squared voltages under baseline load
    voltage_floor : ``v_min**2 * v0**2``
    """

    baseline: np.ndarray
    p_max: np.ndarray
    targets: np.ndarray
    sensitivity: np.ndarray
    y_d: np.ndarray
    voltage_floor: float

    def __post_init__(self):
        n, s = np.shape(self.sensitivity)
        T = np.shape(self.baseline)[0]
        if np.shape(self.p_max) != (s,) or np.shape(self.targets) != (s,) \
                or np.shape(self.y_d) != (n, T):
            raise DimensionMismatch("inconsistent problem dimensions")

    @property
    def s(self) -> int:
        return self.sensitivity.shape[1]

    @property
    def n(self) -> int:
        return self.sensitivity.shape[0]

    @property
    def T(self) -> int:
        return self.baseline.shape[0]


def build_problem(feeder: FeederModel, fleet: Fleet, baseline: BaselineLoad,
                  v_min: float, adj: AdjacencyMatrices | None = None) -> ValleyProblem:
    adj = adj if adj is not None else build_adjacency(feeder)
    if baseline.T != fleet.T:
        raise DimensionMismatch(f"baseline horizon {baseline.T} != fleet horizon {fleet.T}")
    D = build_sensitivity(adj, fleet.nodes, fleet.p_max, feeder.s_base)
    y_d = baseline_voltage(adj, baseline, feeder.v0, feeder.s_base)
    return ValleyProblem(baseline=baseline.aggregate, p_max=fleet.p_max,
                         targets=fleet.targets, sensitivity=D, y_d=y_d,
                         voltage_floor=v_min ** 2 * feeder.v0 ** 2)


# -- objective and gradients ---------------------------------------------------

def total_load(profiles, baseline, p_max) -> np.ndarray:
    """``P_b + sum_i p_max_i * c_i``, accumulated in ascending agent order."""
    profiles = np.asarray(profiles, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if profiles.ndim != 2 or profiles.shape != (len(p_max), baseline.shape[0]):
        raise DimensionMismatch(
            f"profiles {profiles.shape} vs {len(p_max)} EVs and horizon {baseline.shape[0]}")
    ev = np.add.reduce(np.asarray(p_max, dtype=float)[:, None] * profiles, axis=0)
    return baseline + ev


def objective(profiles, baseline, p_max) -> float:
    """Valley-filling cost ``0.5 * ||P_b + sum_i p_max_i c_i||^2``."""
    load = total_load(profiles, baseline, p_max)
    return 0.5 * float(load @ load)


def dual_gradient(profiles, y_d, D, voltage_floor: float) -> np.ndarray:
    """Voltage-constraint residual ``floor - y``; positive entries are violations."""
    profiles = np.asarray(profiles, dtype=float)
    if profiles.shape[0] != D.shape[1] or y_d.shape != (D.shape[0], profiles.shape[1]):
        raise DimensionMismatch(f"D {D.shape}, y_d {y_d.shape}, profiles {profiles.shape}")
    return voltage_floor - (y_d + D @ profiles)


def lagrangian(problem: ValleyProblem, profiles, dual) -> float:
    g = dual_gradient(profiles, problem.y_d, problem.sensitivity, problem.voltage_floor)
    return objective(profiles, problem.baseline, problem.p_max) + float(np.sum(dual * g))


def primal_gradient(profiles, dual, baseline, p_max, D, i: int | None = None) -> np.ndarray:
    """Gradient of the Lagrangian with respect to one profile (or all, if ``i`` is None)."""
    dual = np.asarray(dual, dtype=float)
    load = total_load(profiles, baseline, p_max)
    if dual.shape != (D.shape[0], load.shape[0]):
        raise DimensionMismatch(f"dual has shape {dual.shape}, expected {(D.shape[0], load.shape[0])}")
    if i is None:
        return np.asarray(p_max)[:, None] * load[None, :] - D.T @ dual
    return p_max[i] * load - D[:, i] @ dual


# -- message exchange ------------------------------------------------------------

@dataclass(frozen=True)
class Downstream:
    """Coordinator broadcast: identical for every agent."""

    k: int
    dual: np.ndarray
    load: np.ndarray
    dual_term: np.ndarray  # D^T dual, one row per agent

    def gradient(self, rows, p_max) -> np.ndarray:
        return p_max[rows, None] * self.load[None, :] - self.dual_term[rows]


class AttackHook(Protocol):
    agent: int

    def inject(self, k: int, profile: np.ndarray) -> np.ndarray | None: ...

    def observe(self, k: int, residual: float, wiretap: "Wiretap") -> None: ...


class Wiretap:
    """Read-only view of the transmitted profiles, published at each barrier.

    Retains the iterate that started the current iteration and the one it
    produced.  Every access is logged.
    """

    def __init__(self):
        self._frames: dict[int, np.ndarray] = {}
        self.log: list[tuple[int, int]] = []

    def publish(self, k: int, before: np.ndarray, after: np.ndarray) -> None:
        self._frames = {k: before, k + 1: after}

    def snapshot(self, agent: int, k: int) -> np.ndarray:
        if k not in self._frames:
            raise WiretapUnavailable(f"iterate {k} is not retained (have {sorted(self._frames)})")
        self.log.append((agent, k))
        return self._frames[k].copy()


@dataclass
class SolverState:
    k: int
    profiles: np.ndarray
    dual: np.ndarray
    residuals: list[float] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)

    @classmethod
    def initial(cls, problem: ValleyProblem) -> "SolverState":
        return cls(k=0, profiles=np.zeros((problem.s, problem.T)),
                   dual=np.zeros((problem.n, problem.T)))


def broadcast(state: SolverState, problem: ValleyProblem) -> Downstream:
    load = total_load(state.profiles, problem.baseline, problem.p_max)
    return Downstream(k=state.k, dual=state.dual, load=load,
                      dual_term=problem.sensitivity.T @ state.dual)


def _primal_rows(rows: np.ndarray, state: SolverState, msg: Downstream,
                 problem: ValleyProblem, config: SolverConfig,
                 hooks: dict[int, AttackHook]) -> np.ndarray:
    alpha, _ = config.steps(state.k)
    C = state.profiles[rows]
    g = msg.gradient(rows, problem.p_max)
    for j, i in enumerate(rows):
        hook = hooks.get(int(i))
        if hook is not None:
            extra = hook.inject(state.k, C[j])
            if extra is not None:
                g[j] = g[j] + extra
    x = (config.tau_c * C - alpha * g) / config.tau_c
    return shrink_project(x, config.tau_c, problem.targets[rows])


def primal_step(i: int, state: SolverState, problem: ValleyProblem, config: SolverConfig,
                hook: AttackHook | None = None) -> np.ndarray:
    """One agent's update ``P((1/tau) P(tau c_i - alpha (grad_i + injection)))``."""
    msg = broadcast(state, problem)
    hooks = {i: hook} if hook is not None else {}
    return _primal_rows(np.array([i]), state, msg, problem, config, hooks)[0]


def dual_step(state: SolverState, problem: ValleyProblem, config: SolverConfig) -> np.ndarray:
    """Shrunken projected ascent on the multipliers, clipped to ``[0, lambda_max]``."""
    _, beta = config.steps(state.k)
    hi = np.inf if config.lambda_max is None else config.lambda_max
    g = dual_gradient(state.profiles, problem.y_d, problem.sensitivity, problem.voltage_floor)
    inner = np.clip(config.tau_l * state.dual + beta * g, 0.0, hi)
    return np.clip(inner / config.tau_l, 0.0, hi)


# -- driver ----------------------------------------------------------------------

@dataclass
class SolveResult:
    state: SolverState
    converged: bool
    criterion: str  # "tolerance" or "k_max"
    hooks: dict
    wiretap: Wiretap

    @property
    def profiles(self) -> np.ndarray:
        return self.state.profiles

    @property
    def dual(self) -> np.ndarray:
        return self.state.dual

    @property
    def iterations(self) -> int:
        return self.state.k


def _chunks(s: int, workers: int) -> list[np.ndarray]:
    workers = max(1, min(workers, s)) if s else 1
    return [c for c in np.array_split(np.arange(s), workers) if c.size]


def run(problem: ValleyProblem, config: SolverConfig, hooks: dict | None = None,
        workers: int = 1, callback: Callable[[SolverState], None] | None = None,
        trace_path=None) -> SolveResult:
    """Iterate until ``||C^{k+1} - C^k||_F < eps`` or ``k_max`` updates.

    Agents' primal steps are split over ``workers`` threads; the result does
    not depend on the split.  ``callback`` sees the state after every update.
    """
    hooks = dict(hooks or {})
    state = SolverState.initial(problem)
    wiretap = Wiretap()
    chunks = _chunks(problem.s, workers)
    pool = ThreadPoolExecutor(max_workers=len(chunks)) if len(chunks) > 1 else None
    trace = None
    if trace_path is not None:
        trace_fh = open(trace_path, "a", newline="")
        trace = csv.writer(trace_fh, lineterminator="\n")
        if trace_fh.tell() == 0:
            trace.writerow(["k", "residual", "objective", "min_voltage"])

    converged = False
    try:
        while state.k < config.k_max:
            msg = broadcast(state, problem)
            if pool is None:
                new_profiles = _primal_rows(np.arange(problem.s), state, msg, problem,
                                            config, hooks)
            else:
                parts = pool.map(lambda rows: _primal_rows(rows, state, msg, problem,
                                                           config, hooks), chunks)
                new_profiles = np.concatenate(list(parts), axis=0)
            new_dual = dual_step(state, problem, config)

            if not (np.all(np.isfinite(new_profiles)) and np.all(np.isfinite(new_dual))):
                raise NumericalDivergence(f"non-finite iterate at k={state.k + 1}")

            diff = new_profiles - state.profiles
            per_agent = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            residual = float(np.sqrt(per_agent @ per_agent))

            wiretap.publish(state.k, state.profiles, new_profiles)
            for i in sorted(hooks):
                hooks[i].observe(state.k, float(per_agent[i]), wiretap)

            obj = objective(new_profiles, problem.baseline, problem.p_max)
            state.residuals.append(residual)
            state.objectives.append(obj)
            state = SolverState(k=state.k + 1, profiles=new_profiles, dual=new_dual,
                                residuals=state.residuals, objectives=state.objectives)
            if trace is not None:
                y = problem.y_d + problem.sensitivity @ new_profiles
                trace.writerow([state.k, repr(residual), repr(obj),
                                repr(math.sqrt(max(float(y.min()), 0.0)))])
            if callback is not None:
                callback(state)
            if residual < config.eps:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
        if trace is not None:
            trace_fh.close()

    criterion = "tolerance" if converged else "k_max"
    log.debug("stopped after %d iterations (%s)", state.k, criterion)
    return SolveResult(state=state, converged=converged, criterion=criterion,
                       hooks=hooks, wiretap=wiretap)
