"""
Reference solutions used to validate the decentralised solver.

``solve_reference`` is a plain (unshrunken) projected primal-dual iteration
run to a tight tolerance; ``grid_brute_force`` enumerates a lattice of
feasible profiles and shares no code with either solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTarget, OracleNotConverged, ProblemTooLarge
from .fleet import project_feasible


@dataclass
class ReferenceSolution:
    profiles: np.ndarray
    objective: float
    dual: np.ndarray
    method: str
    residual: float
    iterations: int = 0


def _penalty_gradient(penalties, C):
    g = np.zeros_like(C)
    for a, terms in (penalties or {}).items():
        for term in terms:
            g[a] += term.gradient(C[a])
    return g


def _penalty_value(penalties, C) -> float:
    return sum(term.value(C[a]) for a, terms in (penalties or {}).items() for term in terms)


def _valley_objective(C, problem) -> float:
    load = problem.baseline + problem.p_max @ C
    return 0.5 * float(load @ load)


def solve_reference(problem, penalties: dict | None = None, tol: float = 1e-9,
                    max_iter: int = 1_000_000, decay: float = 1e4) -> ReferenceSolution:
    """Projected primal-dual iteration with slowly diminishing steps.

    Steps start at ``1/L`` (``L`` the Lipschitz constant of the primal
    gradient) and ``0.5 / (alpha ||D||^2)`` and decay as
    ``1/sqrt(1 + k/decay)``.  Stops when the change of the profiles, and the
    change of the multipliers mapped through ``alpha D^T``, both fall below
    ``tol``.  ``penalties`` maps agent -> list of quadratic terms added to the
    objective (used for attacked problems).

    Raises OracleNotConverged, carrying the last iterate as ``.solution``.
    """
    s, T = problem.s, problem.T
    D = problem.sensitivity
    K = problem.targets
    w_max = max((float(np.max(t.weights)) for ts in (penalties or {}).values() for t in ts),
                default=0.0)
    L = float(problem.p_max @ problem.p_max) + 2.0 * w_max
    alpha0 = 1.0 / L
    d_norm = float(np.linalg.norm(D, 2)) if D.size else 0.0
    beta0 = 0.5 / (alpha0 * d_norm ** 2) if d_norm > 0 else 0.0

    C = project_feasible(np.zeros((s, T)), K)
    lam = np.zeros((problem.n, T))
    residual = math.inf
    k = 0
    for k in range(1, max_iter + 1):
        scale = 1.0 / math.sqrt(1.0 + (k - 1) / decay)
        alpha, beta = alpha0 * scale, beta0 * scale
        load = problem.baseline + problem.p_max @ C
        grad = problem.p_max[:, None] * load[None, :] - D.T @ lam + _penalty_gradient(penalties, C)
        C_new = project_feasible(C - alpha * grad, K)
        viol = problem.voltage_floor - (problem.y_d + D @ C_new)
        lam_new = np.maximum(lam + beta * viol, 0.0)
        primal = float(np.linalg.norm(C_new - C))
        dual = alpha * d_norm * float(np.linalg.norm(lam_new - lam))
        C, lam = C_new, lam_new
        residual = max(primal, dual)
        if residual < tol:
            break

    sol = ReferenceSolution(profiles=C, objective=_valley_objective(C, problem), dual=lam,
                            method="high-precision-pd", residual=residual, iterations=k)
    if residual >= tol:
        err = OracleNotConverged(f"residual {residual:.3e} after {k} iterations (tol {tol:.1e})")
        err.solution = sol
        raise err
    return sol


def optimality_certificate(problem, C, dual, penalties: dict | None = None) -> float:
    """Norm of the projected-gradient map ``P(C - grad / L) - C``; zero at a KKT point."""
    w_max = max((float(np.max(t.weights)) for ts in (penalties or {}).values() for t in ts),
                default=0.0)
    L = float(problem.p_max @ problem.p_max) + 2.0 * w_max
    load = problem.baseline + problem.p_max @ C
    grad = problem.p_max[:, None] * load[None, :] - problem.sensitivity.T @ dual \
        + _penalty_gradient(penalties, C)
    return float(np.linalg.norm(project_feasible(C - grad / L, problem.targets) - C))


def _lattice(K: float, T: int, resolution: float) -> np.ndarray:
    """Feasible points whose first T-1 coordinates lie on the grid."""
    steps = int(round(1.0 / resolution))
    axis = np.linspace(0.0, 1.0, steps + 1)
    if T == 1:
        pts = np.array([[K]])
    else:
        grids = np.meshgrid(*([axis] * (T - 1)), indexing="ij")
        head = np.stack([g.ravel() for g in grids], axis=1)
        last = K - head.sum(axis=1)
        pts = np.column_stack([head, last])
    ok = (pts[:, -1] >= -1e-12) & (pts[:, -1] <= 1.0 + 1e-12)
    pts = pts[ok]
    pts[:, -1] = np.clip(pts[:, -1], 0.0, 1.0)
    return pts


def grid_brute_force(problem, resolution: float = 0.01, penalties: dict | None = None,
                     chunk: int = 200_000) -> ReferenceSolution:
    """Exhaustive search over per-EV lattices of the feasible set.

    The voltage constraint enters as a ``1e9 * total violation`` penalty.
    """
    s, T = problem.s, problem.T
    if s * T > 8:
        raise ProblemTooLarge(f"grid search limited to s*T <= 8, got {s * T}")
    if resolution < 1e-3:
        raise ValueError("resolution must be at least 1e-3")
    K = np.asarray(problem.targets, dtype=float)
    if np.any(K < 0) or np.any(K > T):
        raise InfeasibleTarget(f"targets {K} outside [0, {T}]")

    cands = [_lattice(float(K[i]), T, resolution) for i in range(s)]
    loads = [problem.p_max[i] * cands[i] for i in range(s)]
    volts = [problem.sensitivity[:, i][None, :, None] * cands[i][:, None, :] for i in range(s)]
    pens = []
    for i in range(s):
        terms = (penalties or {}).get(i, [])
        pens.append(np.array([sum(t.value(c) for t in terms) for c in cands[i]]))

    sizes = [len(c) for c in cands]
    total = int(np.prod(sizes))
    best_val, best_idx = math.inf, None
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, sizes)
        load = np.broadcast_to(problem.baseline, (flat.size, T)).copy()
        y = np.broadcast_to(problem.y_d, (flat.size,) + problem.y_d.shape).copy()
        pen = np.zeros(flat.size)
        for i in range(s):
            load += loads[i][idx[i]]
            y += volts[i][idx[i]]
            pen += pens[i][idx[i]]
        viol = np.maximum(problem.voltage_floor - y, 0.0).sum(axis=(1, 2))
        val = 0.5 * np.einsum("ij,ij->i", load, load) + pen + 1e9 * viol
        j = int(np.argmin(val))
        if val[j] < best_val:
            best_val, best_idx = float(val[j]), [int(ix[j]) for ix in idx]

    C = np.stack([cands[i][best_idx[i]] for i in range(s)])
    return ReferenceSolution(profiles=C, objective=_valley_objective(C, problem),
                             dual=np.zeros((problem.n, T)), method="grid-brute-force",
                             residual=resolution, iterations=total)
