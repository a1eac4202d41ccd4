import copy
import sys
import json

import numpy as np
import pytest

from evattack.engine import ValleyProblem, build_problem
from evattack.feeder import BaselineLoad, FeederModel, Line, build_adjacency, load_feeder
from evattack.feeder import bundled_path
from evattack.fleet import EvSpec, Fleet


def chain_feeder(r=(0.1, 0.2), x=(0.2, 0.3), s_base=1000.0) -> FeederModel:
    lines = [Line(b, b + 1, r[b], x[b]) for b in range(len(r))]
    return FeederModel(n=len(r), lines=tuple(lines), s_base=s_base)


def tiny_problem(K=(1.5, 2.2), p_b=((6.0, 3.0, 1.0, 2.0), (4.0, 3.0, 2.0, 3.0)),
                 v_min=0.9, r=(0.1, 0.2), x=(0.2, 0.3)) -> ValleyProblem:
    """Two buses, one EV on each, horizon taken from ``p_b``."""
    feeder = chain_feeder(r, x)
    p = np.asarray(p_b, dtype=float)
    T = p.shape[1]
    dt, p_max = 0.25, 6.6
    evs = [EvSpec(id=i, node=i + 1, p_max=p_max, capacity=k * dt * p_max, soc_ini=0.0,
                  soc_des=1.0) for i, k in enumerate(K)]
    fleet = Fleet(evs=tuple(evs), dt=dt, T=T)
    return build_problem(feeder, fleet, BaselineLoad(p=p, q=0.3 * p), v_min)


def direct_problem(baseline, p_max, K, D=None, y_d=None, floor=0.0) -> ValleyProblem:
    baseline = np.asarray(baseline, dtype=float)
    p_max = np.asarray(p_max, dtype=float)
    s, T = p_max.size, baseline.size
    D = np.zeros((1, s)) if D is None else np.asarray(D, dtype=float)
    y_d = np.ones((D.shape[0], T)) if y_d is None else np.asarray(y_d, dtype=float)
    return ValleyProblem(baseline=baseline, p_max=p_max, targets=np.asarray(K, dtype=float),
                         sensitivity=D, y_d=y_d, voltage_floor=floor)


def distflow_voltages(feeder: FeederModel, p, q) -> np.ndarray:
    """Squared voltages by walking the tree: v_child = v_parent - 2 (r P + x Q) / s_base,
    with P, Q the total load below the line."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    children = {b: [] for b in range(feeder.n + 1)}
    for ln in feeder.lines:
        children[ln.source].append(ln)

    def below(bus):
        tp, tq = p[bus - 1].copy(), q[bus - 1].copy()
        for ln in children[bus]:
            cp, cq = below(ln.target)
            tp, tq = tp + cp, tq + cq
        return tp, tq

    v = np.zeros_like(p)

    def walk(bus, v_bus):
        for ln in children[bus]:
            fp, fq = below(ln.target)
            v_child = v_bus - 2.0 * (ln.r * fp + ln.x * fq) / feeder.s_base
            v[ln.target - 1] = v_child
            walk(ln.target, v_child)

    walk(0, np.full(p.shape[1:], feeder.v0 ** 2))
    return v


@pytest.fixture
def ieee13():
    return load_feeder(bundled_path("ieee13.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_projection(c, K, resolution=1e-3) -> np.ndarray:
    """Closest point of {z in [0,1]^T : sum z = K} by grid search on the first T-1
    coordinates: a 0.02 sweep, then a 1e-3 sweep around the best coarse point."""
    c = np.asarray(c, dtype=float)
    T = c.size
    if T == 1:
        return np.array([K])

    def search(axes):
        grids = np.meshgrid(*axes, indexing="ij")
        head = np.stack([g.ravel() for g in grids], axis=1)
        last = K - head.sum(axis=1)
        ok = (last >= -1e-12) & (last <= 1 + 1e-12)
        pts = np.column_stack([head[ok], np.clip(last[ok], 0, 1)])
        d = ((pts - c) ** 2).sum(axis=1)
        return pts[np.argmin(d)]

    coarse = search([np.linspace(0, 1, 51)] * (T - 1))
    axes = [np.clip(np.arange(v - 0.03, v + 0.03 + resolution / 2, resolution), 0, 1)
            for v in coarse[:-1]]
    return search(axes)


SMALL_SCENARIO = {
    "name": "small",
    "feeder": "bundled:ieee13.json",
    "horizon": {"T": 12, "dt": 0.5},
    "fleet": {"generator": {"per_node": {"2": 2, "8": 2}, "seed": 5, "prng": "numpy-pcg64"}},
    "baseline": {"synthetic": {"peak_kw": 300.0, "valley_kw": 170.0, "morning_kw": 205.0,
                               "valley_after_h": 4.0}},
    "solver": {"alpha": 0.005, "beta": 100.0, "tau_c": 0.98, "tau_l": 0.98, "k_max": 5000,
               "eps": 1e-6, "v_min": 0.954},
    "attacks": [{"attackers": [0], "variant": "smooth", "omega1": 5.0}],
    "workers": 1,
}


@pytest.fixture
def small_config_path(tmp_path):
    def write(**changes):
        data = copy.deepcopy(SMALL_SCENARIO)
        data.update(changes)
        path = tmp_path / f"{data['name']}.json"
        path.write_text(json.dumps(data))
        return path
    return write


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for label in sorted(results):
            terminalreporter.write_line(results[label])
