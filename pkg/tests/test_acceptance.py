"""
Acceptance suite.  One test per criterion; each prints a single PASS/FAIL line
(collected again in the terminal summary).  Run alone with

    pytest tests/test_acceptance.py -v
"""

import functools
import time

import numpy as np
import pytest

from conftest import brute_projection, tiny_problem
from evattack.attacks import AttackSpec, deviation_bound_audit, make_hooks
from evattack.engine import (SolverConfig, ValleyProblem, dual_gradient, lagrangian, objective,
                             primal_gradient, run)
from evattack.feeder import (BaselineLoad, baseline_voltage, build_adjacency, build_sensitivity,
                             bundled_path, load_feeder)
from evattack.fleet import project_feasible, shrink_project
from evattack.metrics import charging_window, compare, flatness
from evattack.oracle import grid_brute_force, solve_reference
from evattack.scenario import bundled_scenario, execute, prepare

RESULTS: dict[str, str] = {}
_START = time.perf_counter()


def record(n: int, ok: bool, detail: str, tag: str = "") -> None:
    label = f"criterion {n:2d}{tag}"
    line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[label] = line
    print(line)
    assert ok, line


@functools.lru_cache(maxsize=None)
def scenario(name):
    return prepare(bundled_scenario(name))


@functools.lru_cache(maxsize=None)
def report(name, variant=None, workers=None):
    cfg = bundled_scenario(name)
    if variant is not None:
        cfg = cfg.with_attacks(cfg.variants[variant], name=variant)
    return execute(cfg, workers=workers, scenario=scenario(name))


@functools.lru_cache(maxsize=None)
def attack_free_reference():
    return solve_reference(scenario("attack-free").problem)


def _random_problem(rng, s=5, T=6):
    feeder = load_feeder(bundled_path("ieee13.json"))
    adj = build_adjacency(feeder)
    nodes = np.sort(rng.integers(1, 13, s))
    p_max = rng.uniform(3.3, 7.2, s)
    p = rng.uniform(5, 60, (12, T))
    base = BaselineLoad(p=p, q=0.3 * p)
    return ValleyProblem(baseline=base.aggregate, p_max=p_max,
                         targets=rng.uniform(0, T, s),
                         sensitivity=build_sensitivity(adj, nodes, p_max, feeder.s_base),
                         y_d=baseline_voltage(adj, base, feeder.v0, feeder.s_base),
                         voltage_floor=0.954 ** 2)


def test_criterion_01_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    # the Lagrangian is quadratic in C and affine in lambda, so central differences carry no
    # truncation error; only rounding of L (~1e5) matters, hence the wider dual step
    h, h_dual = 1e-5, 0.1
    worst = 0.0
    for _ in range(100):
        prob = _random_problem(rng)
        C = rng.uniform(0, 1, (prob.s, prob.T))
        lam = rng.uniform(0, 1e3, (prob.n, prob.T))
        g = primal_gradient(C, lam, prob.baseline, prob.p_max, prob.sensitivity)
        fd = np.zeros_like(C)
        for idx in np.ndindex(C.shape):
            e = np.zeros_like(C)
            e[idx] = h
            fd[idx] = (lagrangian(prob, C + e, lam) - lagrangian(prob, C - e, lam)) / (2 * h)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
        gl = dual_gradient(C, prob.y_d, prob.sensitivity, prob.voltage_floor)
        fdl = np.zeros_like(lam)
        for idx in np.ndindex(lam.shape):
            e = np.zeros_like(lam)
            e[idx] = h_dual
            fdl[idx] = (lagrangian(prob, C, lam + e) - lagrangian(prob, C, lam - e)) / (2 * h_dual)
        worst = max(worst, np.linalg.norm(gl - fdl) / np.linalg.norm(fdl))
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-6 and dt < 5.0,
           f"max relative FD error {worst:.2e} (<= 1e-6), {dt:.2f} s (< 5 s)")


def test_criterion_02_projection():
    rng = np.random.default_rng(2)
    worst_brute = worst_idem = worst_exp = 0.0
    for _ in range(50):
        T = int(rng.integers(1, 5))
        c = rng.uniform(-1.5, 2.5, T)
        K = float(rng.uniform(0, T))
        z = project_feasible(c, K)
        worst_brute = max(worst_brute, np.abs(z - brute_projection(c, K, 1e-3)).max())
        worst_idem = max(worst_idem, np.abs(project_feasible(z, K) - z).max())
        d = rng.normal(size=T)
        worst_exp = max(worst_exp, np.linalg.norm(project_feasible(c + d, K) - z)
                        - np.linalg.norm(d))
    ok = worst_brute <= 5e-3 and worst_idem <= 1e-9 and worst_exp <= 1e-9
    record(2, ok, f"brute-force gap {worst_brute:.1e} (<= 5e-3), idempotence {worst_idem:.1e}, "
                  f"expansion {max(worst_exp, 0.0):.1e} (<= 1e-9)")


def _lattice_round(C, K, resolution):
    """Snap each row's first T-1 entries to the grid and close the sum with the last."""
    out = np.empty_like(C)
    for i, (row, k) in enumerate(zip(C, K)):
        head = np.round(row[:-1] / resolution) * resolution
        last = k - head.sum()
        # nudge the head until the eliminated coordinate fits the box
        j = 0
        while not -1e-12 <= last <= 1 + 1e-12:
            step = resolution if last > 1 else -resolution
            head[j % head.size] = np.clip(head[j % head.size] + step, 0, 1)
            last = k - head.sum()
            j += 1
        out[i] = np.append(head, np.clip(last, 0, 1))
    return out


def test_criterion_03_oracle_equivalence():
    t0 = time.perf_counter()
    prob = tiny_problem()
    res = run(prob, SolverConfig(alpha=0.01, beta=1.0, k_max=10_000, eps=1e-10))
    ref = solve_reference(prob)
    f_spds = objective(res.profiles, prob.baseline, prob.p_max)
    rel = abs(f_spds - ref.objective) / ref.objective
    resolution = 0.05
    grid = grid_brute_force(prob, resolution=resolution)
    snapped = _lattice_round(ref.profiles, prob.targets, resolution)
    f_snapped = objective(snapped, prob.baseline, prob.p_max)
    # the reference is the true minimum, and the grid must do at least as well as the
    # reference snapped onto its lattice
    sandwich = ref.objective <= grid.objective + 1e-9 <= f_snapped + 2e-9
    dt = time.perf_counter() - t0
    record(3, rel <= 1e-3 and sandwich and dt < 30,
           f"SPDS vs reference rel gap {rel:.1e} (<= 1e-3); grid {grid.objective:.4f} in "
           f"[{ref.objective:.4f}, {f_snapped:.4f}] at resolution {resolution}; {dt:.1f} s")


def test_criterion_04_valley_filling():
    sc = scenario("attack-free")
    r = report("attack-free")
    window = charging_window(r.profiles, r.p_max, threshold=0.0)
    flat = flatness(r.total_load, window)
    vmin = float(r.voltages.min())
    energy = float(np.abs(r.energy_delivered - r.energy_required).max())
    ok = (r.converged and flat["rel_std"] <= 0.01 and vmin >= 0.954 - 1e-3 and energy <= 1e-6
          and sc.feeder.n + 1 == 13 and sc.fleet.s == 50 and sc.problem.T == 52)
    record(4, ok, f"flat window from step {window.start}: rel_std {flat['rel_std']:.2e} "
                  f"(<= 1e-2), min voltage {vmin:.4f} (>= 0.953), energy error {energy:.1e} kWh")


def test_criterion_05_injection_equivalence():
    prob = tiny_problem()
    omega1, attackers = 7.0, (1,)
    cfg = SolverConfig(alpha=0.01, beta=50.0, tau_c=0.97, tau_l=0.95, k_max=300, eps=1e-14)
    hooked = []
    run(prob, cfg, hooks=make_hooks([AttackSpec(attackers, "smooth", omega1=omega1)], prob.T),
        callback=lambda st: hooked.append((st.profiles.copy(), st.dual.copy())))

    # attack-free primal-dual iteration on F + omega1 ||c_i||^2, written out directly
    C = np.zeros((prob.s, prob.T))
    lam = np.zeros((prob.n, prob.T))
    weight = np.zeros(prob.s)
    weight[list(attackers)] = omega1
    worst = 0.0
    for C_hook, lam_hook in hooked:
        load = prob.baseline + prob.p_max @ C
        grad = prob.p_max[:, None] * load - prob.sensitivity.T @ lam + 2 * weight[:, None] * C
        C_new = shrink_project((cfg.tau_c * C - cfg.alpha * grad) / cfg.tau_c, cfg.tau_c,
                               prob.targets)
        viol = prob.voltage_floor - (prob.y_d + prob.sensitivity @ C)
        lam = np.maximum(np.maximum(cfg.tau_l * lam + cfg.beta * viol, 0) / cfg.tau_l, 0)
        C = C_new
        worst = max(worst, np.abs(C - C_hook).max(), np.abs(lam - lam_hook).max())
    record(5, len(hooked) == 300 and worst <= 1e-10,
           f"{len(hooked)} iterations, max per-iteration difference {worst:.1e} (<= 1e-10)")


@pytest.mark.parametrize("name", ["smooth", "rush", "stealthy-smooth"])
def test_criterion_06_deviation_sandwich(name):
    r = report(name)
    ref = attack_free_reference()
    rec = deviation_bound_audit(r.profiles, r.objective, ref.objective, r.attack_specs,
                                r.targets, r.profiles.shape[1], r.snapshots, slack=1e-6,
                                raise_on_violation=False)
    record(6, rec["holds"] and r.converged,
           f"F(C*)={ref.objective:.6f} <= F(C^)={r.objective:.6f} "
           f"<= F(C^)+w1*G={r.objective + rec['weighted_interest']:.6f}; "
           f"gap {rec['objective_gap']:.4g} <= bound {rec['bound']:.4g}", tag=f" [{name}]")


def _attacker_variance(r, attackers):
    return float(np.mean([np.var(r.profiles[a]) for a in attackers]))


def test_criterion_07_smooth_effect():
    cfg = bundled_scenario("smooth")
    spec = cfg.attacks[0]
    sc = scenario("smooth")
    variances = []
    for omega1 in (0.0, 1e3, 1e5):
        if omega1 == 0.0:
            r = report("attack-free")
        elif omega1 == spec.omega1:
            r = report("smooth")
        else:
            twin = AttackSpec(spec.attackers, "smooth", omega1=omega1)
            r = execute(cfg.with_attacks([twin], name=f"smooth-{omega1:g}"), scenario=sc)
        assert r.converged
        variances.append(_attacker_variance(r, spec.attackers))
    ok = variances[0] > variances[1] > variances[2]
    record(7, ok, "attacker variance " + " > ".join(f"{v:.3e}" for v in variances)
           + " for omega1 = 0, 1e3, 1e5")


def test_criterion_08_rush_effect():
    r = report("rush")
    spec = r.attack_specs[0]
    t_d = spec.t_d
    sc = scenario("rush")
    frac = []
    for a in spec.attackers:
        assert t_d >= r.targets[a], "rush deadline shorter than the charging need"
        early = sc.fleet.eta[a] * sc.fleet.dt * sc.fleet.p_max[a] * r.profiles[a, :t_d + 1].sum()
        frac.append(early / r.energy_required[a])
    ok = r.converged and min(frac) >= 0.99 and t_d in (sc.problem.T // 2, sc.problem.T // 2 - 1)
    record(8, ok, f"t_d={t_d}: least attacker share of E_req by step t_d+1 is {min(frac):.6f} "
                  f"(>= 0.99)")


def test_criterion_09_stealth_improvement():
    stealthy = compare(report("stealthy-smooth"), report("attack-free"))
    plain = compare(report("stealthy-smooth", "non-stealthy"), report("attack-free"))
    ratio = stealthy.zeta / plain.zeta
    ok = ratio <= 0.7 and stealthy.objective_delta < plain.objective_delta
    record(9, ok, f"zeta {stealthy.zeta:.4f} vs {plain.zeta:.4f} (ratio {ratio:.3f} <= 0.7); "
                  f"objective delta {stealthy.objective_delta:.2f} < {plain.objective_delta:.2f}")


def test_criterion_10_determinism():
    one = execute(bundled_scenario("stealthy-smooth"), workers=1,
                  scenario=scenario("stealthy-smooth")).to_json()
    eight = execute(bundled_scenario("stealthy-smooth"), workers=8,
                    scenario=scenario("stealthy-smooth")).to_json()
    elapsed = time.perf_counter() - _START
    ok = one == eight and elapsed < 300
    record(10, ok, f"RunReport JSON identical for 1 and 8 workers: {one == eight} "
                   f"({len(one)} bytes); suite time {elapsed:.0f} s (< 300 s)")
