"""Bundled simplex: correctness against a vertex-enumeration oracle."""

import itertools

import numpy as np
import pytest

from chpdispatch.lp import LinearProgram, check_kkt, solve_lp, write_lp_text


def brute_force_optimum(lp: LinearProgram) -> float | None:
    """Enumerate basic points of {Gz <= h, Az = b, l <= z <= u}; None if empty.

    All candidate vertices arise as intersections of n active constraints
    drawn from rows and bounds; feasible candidates are scored directly.
    """
    n = lp.n_vars
    rows = [(lp.g[i], lp.h[i]) for i in range(lp.n_ineq)]
    rows += [(lp.a_eq[i], lp.b_eq[i]) for i in range(lp.n_eq)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        if np.isfinite(lp.lower[i]):
            rows.append((e.copy(), lp.lower[i]))
        if np.isfinite(lp.upper[i]):
            rows.append((e.copy(), lp.upper[i]))
    best = None
    for combo in itertools.combinations(range(len(rows)), n):
        a = np.array([rows[i][0] for i in combo])
        b = np.array([rows[i][1] for i in combo])
        try:
            z = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            continue
        if _feasible(lp, z):
            val = float(lp.c @ z)
            if best is None or val < best:
                best = val
    return best


def _feasible(lp: LinearProgram, z: np.ndarray, tol: float = 1e-7) -> bool:
    if lp.n_ineq and np.any(lp.g @ z - lp.h > tol):
        return False
    if lp.n_eq and np.any(np.abs(lp.a_eq @ z - lp.b_eq) > tol):
        return False
    return not (np.any(z < lp.lower - tol) or np.any(z > lp.upper + tol))


def test_min_x_above_one():
    lp = LinearProgram(c=np.array([1.0]), g=np.array([[-1.0]]), h=np.array([-1.0]))
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.z[0] == pytest.approx(1.0, abs=1e-10)
    assert sol.objective == pytest.approx(1.0, abs=1e-10)


def test_conflicting_rows_infeasible():
    lp = LinearProgram(
        c=np.array([1.0]),
        g=np.array([[1.0], [-1.0]]),
        h=np.array([0.0, -1.0]),
        row_labels=("x_low", "x_high"),
    )
    sol = solve_lp(lp)
    assert sol.status == "infeasible"
    assert sol.blocking_rows  # certificate names the clashing rows


def test_unbounded_detected():
    lp = LinearProgram(c=np.array([-1.0]), g=np.array([[-1.0]]), h=np.array([0.0]))
    sol = solve_lp(lp)
    assert sol.status == "unbounded"


def test_bounds_only_fast_path():
    lp = LinearProgram(
        c=np.array([2.0, -3.0, 0.0]),
        lower=np.array([-1.0, -2.0, -4.0]),
        upper=np.array([5.0, 7.0, 4.0]),
    )
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert np.allclose(sol.z, [-1.0, 7.0, 0.0])


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(42)
    checked = 0
    for trial in range(120):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 9))
        lp = LinearProgram(
            c=rng.normal(size=n),
            g=rng.normal(size=(m, n)),
            h=rng.normal(size=m) + 1.0,
            lower=np.full(n, -3.0),
            upper=np.full(n, 3.0),
        )
        expected = brute_force_optimum(lp)
        sol = solve_lp(lp)
        if expected is None:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(expected, abs=1e-8)
            checked += 1
    assert checked > 60


def test_random_lps_with_equalities():
    rng = np.random.default_rng(7)
    for trial in range(40):
        n = int(rng.integers(2, 6))
        lp = LinearProgram(
            c=rng.normal(size=n),
            g=rng.normal(size=(4, n)),
            h=rng.normal(size=4) + 2.0,
            a_eq=rng.normal(size=(1, n)),
            b_eq=rng.normal(size=1) * 0.2,
            lower=np.full(n, -4.0),
            upper=np.full(n, 4.0),
        )
        expected = brute_force_optimum(lp)
        sol = solve_lp(lp)
        if expected is None:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(expected, abs=1e-8)
            rep = check_kkt(lp, sol)
            assert rep.primal_residual <= 1e-8
            assert rep.gap <= 1e-7


def test_dual_path_matches_primal_path():
    rng = np.random.default_rng(11)
    for trial in range(25):
        n = int(rng.integers(2, 5))
        m = 300  # forces the dual route in auto mode
        lp = LinearProgram(
            c=rng.normal(size=n),
            g=rng.normal(size=(m, n)),
            h=np.abs(rng.normal(size=m)) + 0.5,
            lower=np.full(n, -10.0),
            upper=np.full(n, 10.0),
        )
        auto = solve_lp(lp)
        forced = solve_lp(lp, force_primal=True)
        assert auto.status == forced.status == "optimal"
        assert auto.objective == pytest.approx(forced.objective, abs=1e-8)
        rep = check_kkt(lp, auto)
        assert rep.primal_residual <= 1e-8
        assert rep.gap <= 1e-7


def test_kkt_residuals_on_clean_solution():
    lp = LinearProgram(c=np.array([1.0]), g=np.array([[-1.0]]), h=np.array([-1.0]))
    sol = solve_lp(lp)
    rep = check_kkt(lp, sol)
    assert rep.primal_residual <= 1e-10
    assert rep.dual_residual <= 1e-10
    assert rep.complementarity <= 1e-10
    assert rep.gap <= 1e-10


def test_kkt_detects_constructed_violation():
    lp = LinearProgram(
        c=np.array([1.0, 1.0]),
        g=np.array([[-1.0, 0.0], [0.0, -1.0]]),
        h=np.array([0.0, 0.0]),
    )
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    perturbed = sol.z.copy()
    perturbed[0] -= 1e-3   # violates z >= 0 by 1e-3
    from dataclasses import replace

    bad = replace(sol, z=perturbed)
    rep = check_kkt(lp, bad)
    assert rep.primal_residual == pytest.approx(1e-3, rel=1e-6)


def test_determinism_bitwise():
    rng = np.random.default_rng(3)
    lp = LinearProgram(
        c=rng.normal(size=5),
        g=rng.normal(size=(8, 5)),
        h=rng.normal(size=8) + 1.0,
        lower=np.full(5, -2.0),
        upper=np.full(5, 2.0),
    )
    a = solve_lp(lp)
    b = solve_lp(lp)
    assert a.status == b.status
    assert a.objective == b.objective
    assert np.array_equal(a.z, b.z)


def test_objective_scaling_leaves_argmin_face():
    rng = np.random.default_rng(9)
    lp = LinearProgram(
        c=rng.normal(size=4),
        g=rng.normal(size=(6, 4)),
        h=rng.normal(size=6) + 1.5,
        lower=np.full(4, -2.0),
        upper=np.full(4, 2.0),
    )
    sol1 = solve_lp(lp)
    lp5 = LinearProgram(c=5.0 * lp.c, g=lp.g, h=lp.h, lower=lp.lower, upper=lp.upper)
    sol5 = solve_lp(lp5)
    assert sol1.status == sol5.status == "optimal"
    assert sol5.objective == pytest.approx(5.0 * sol1.objective, rel=1e-10)


def test_lp_text_export_roundtrippable_shape():
    lp = LinearProgram(
        c=np.array([1.0, -2.0]),
        g=np.array([[1.0, 1.0]]),
        h=np.array([3.0]),
        a_eq=np.array([[1.0, -1.0]]),
        b_eq=np.array([0.5]),
        lower=np.array([0.0, -np.inf]),
        upper=np.array([np.inf, 4.0]),
        names=("alpha", "beta"),
        row_labels=("cap",),
        eq_labels=("link",),
    )
    text = write_lp_text(lp)
    assert "Minimize" in text and "Subject To" in text and "Bounds" in text
    assert "alpha" in text and "cap:" in text and "link:" in text
    assert text.endswith("End\n")


def test_free_variable_handled():
    # min x + y with x free via equality coupling
    lp = LinearProgram(
        c=np.array([0.0, 1.0]),
        a_eq=np.array([[1.0, -1.0]]),
        b_eq=np.array([-2.0]),
        lower=np.array([-np.inf, 0.0]),
        upper=np.array([np.inf, np.inf]),
    )
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.z[1] == pytest.approx(0.0, abs=1e-9)
    assert sol.z[0] == pytest.approx(-2.0, abs=1e-9)
