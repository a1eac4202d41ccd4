import numpy as np
import pytest

from conftest import direct_problem, tiny_problem
from evattack.attacks import AttackSpec, equivalent_penalties
from evattack.errors import InfeasibleTarget, OracleNotConverged, ProblemTooLarge
from evattack.oracle import grid_brute_force, optimality_certificate, solve_reference


def test_single_ev_hand_kkt():
    prob = direct_problem([4.0, 2.0], [6.6], [1.0])
    sol = solve_reference(prob)
    np.testing.assert_allclose(sol.profiles[0], [4.6 / 13.2, 8.6 / 13.2], atol=1e-8)
    assert sol.method == "high-precision-pd" and sol.residual < 1e-9
    grid = grid_brute_force(prob, resolution=1e-3)
    assert abs(grid.objective - sol.objective) <= 1e-4
    np.testing.assert_allclose(grid.profiles[0], sol.profiles[0], atol=1e-3)


def test_zero_requirement():
    prob = direct_problem([4.0, 2.0, 3.0], [6.6, 3.3], [0.0, 0.0])
    sol = solve_reference(prob)
    assert np.all(sol.profiles == 0)
    assert sol.objective == pytest.approx(0.5 * (16 + 4 + 9))


def test_grid_two_steps_is_a_line():
    prob = direct_problem([4.0, 2.0], [6.6], [1.0])
    grid = grid_brute_force(prob, resolution=0.1)
    assert grid.profiles.sum() == pytest.approx(1.0)
    # best point on c1 in {0, 0.1, ..., 1} with c2 = 1 - c1
    assert grid.profiles[0, 0] == pytest.approx(0.3)


def test_grid_matches_reference_on_random_instances():
    rng = np.random.default_rng(99)
    for _ in range(20):
        s = int(rng.integers(1, 3))
        T = int(rng.integers(2, 4))
        P_b = rng.uniform(1, 10, T)
        p_max = rng.uniform(2, 7, s)
        K = rng.uniform(0, T, s)
        prob = direct_problem(P_b, p_max, K)
        ref = solve_reference(prob)
        grid = grid_brute_force(prob, resolution=0.02)
        # the grid can only be worse, and by no more than one lattice step allows
        gap = grid.objective - ref.objective
        lip = np.abs(p_max[:, None] * (P_b + p_max @ ref.profiles)).max()
        assert -1e-7 <= gap <= lip * 0.02 * s * T + 0.5 * (p_max @ p_max) * (0.02 * s * T) ** 2


def test_reference_certificate():
    prob = tiny_problem()
    sol = solve_reference(prob)
    assert optimality_certificate(prob, sol.profiles, sol.dual) < 1e-8
    spec = AttackSpec((0,), "smooth", omega1=5.0)
    pen = equivalent_penalties([spec], prob.T)
    att = solve_reference(prob, penalties=pen)
    assert optimality_certificate(prob, att.profiles, att.dual, pen) < 1e-8
    assert optimality_certificate(prob, sol.profiles, sol.dual, pen) > 1e-4


def test_errors():
    with pytest.raises(ProblemTooLarge):
        grid_brute_force(direct_problem(np.ones(5), [1.0, 1.0], [1.0, 1.0]))
    with pytest.raises(InfeasibleTarget):
        grid_brute_force(direct_problem(np.ones(2), [1.0], [3.0]))
    with pytest.raises(ValueError):
        grid_brute_force(direct_problem(np.ones(2), [1.0], [1.0]), resolution=1e-4)
    with pytest.raises(OracleNotConverged) as info:
        solve_reference(tiny_problem(), max_iter=1)
    assert info.value.solution.iterations == 1
