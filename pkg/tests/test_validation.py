"""Scenario sampling, closed-loop simulation, and Monte Carlo metrics."""

import numpy as np
import pytest

from chpdispatch.compile import LiftedOutputMap, StateSpaceModel
from chpdispatch.dispatch import DispatchSolution, Policy
from chpdispatch.sets import UncertaintyTube
from chpdispatch.tighten import FeedbackGain
from chpdispatch.validation import (
    evaluate,
    parse_method,
    sample_disturbances,
    simulate,
)

from conftest import synthetic_manifest


class TestSampling:
    def test_zero_width_tube_returns_center(self, ref24):
        center = ref24.tube.w_center
        tube = UncertaintyTube(center, center, center)
        batch = sample_disturbances(tube, 10, seed=1, mode="uniform")
        assert np.allclose(batch.samples, center[np.newaxis], atol=0.0)

    def test_determinism(self, ref24):
        a = sample_disturbances(ref24.tube, 100, seed=7, mode="uniform")
        b = sample_disturbances(ref24.tube, 100, seed=7, mode="uniform")
        assert np.array_equal(a.samples, b.samples)
        c = sample_disturbances(ref24.tube, 100, seed=8, mode="uniform")
        assert not np.array_equal(a.samples, c.samples)

    def test_all_samples_inside_tube(self, ref24):
        for mode in ("uniform", "vertex"):
            batch = sample_disturbances(ref24.tube, 64, seed=3, mode=mode)
            assert np.all(batch.samples >= ref24.tube.w_min - 1e-12)
            assert np.all(batch.samples <= ref24.tube.w_max + 1e-12)

    def test_budget_respecting_audit(self, ref24):
        budget = 2.0
        batch = sample_disturbances(ref24.tube, 200, seed=5, mode="budget", budget=budget)
        assert np.all(batch.samples >= ref24.tube.w_min - 1e-12)
        assert np.all(batch.samples <= ref24.tube.w_max + 1e-12)
        width = ref24.tube.half_width
        shift = ref24.tube.center_shift
        dev = batch.samples - ref24.tube.w_center[np.newaxis] - shift[np.newaxis]
        with np.errstate(divide="ignore", invalid="ignore"):
            tilde = np.where(width[np.newaxis] > 0, dev / width[np.newaxis], 0.0)
        norms = np.sum(np.abs(tilde), axis=1)
        assert np.all(norms <= budget + 1e-9)

    def test_vertex_enumeration_small_tube(self):
        lo = np.array([[0.0, -1.0], [0.5, 2.0]])
        hi = np.array([[1.0, -1.0], [0.5, 3.0]])   # two degenerate entries
        tube = UncertaintyTube(lo, (lo + hi) / 2, hi)
        batch = sample_disturbances(tube, 16, seed=0, mode="vertex")
        assert batch.count == 4   # 2 free entries -> 4 corners
        uniq = {tuple(s.ravel()) for s in batch.samples}
        assert len(uniq) == 4
        for s in batch.samples:
            assert np.all((s == lo) | (s == hi))


def scalar_policy(phi: float, horizon: int):
    A = np.array([[phi]])
    B = np.array([[1.0]])
    D = np.array([[1.0]])
    out = LiftedOutputMap(
        feed_u=np.zeros((1, 1)),
        feed_w=np.zeros((1, 1)),
        const=np.zeros((horizon, 1)),
        memory_rows=np.zeros(0, dtype=int),
        heat_u=np.zeros((0, 1)),
        heat_w=np.zeros((0, 1)),
        temps=None,
    )
    ssm = StateSpaceModel(
        A=A, B=B, D=D, output=out,
        manifest=synthetic_manifest(1, 1, 1, 1),
        horizon=horizon, x0=np.zeros(1),
    )
    gain = FeedbackGain(k=np.array([[-0.25]]), phi=A + B @ np.array([[-0.25]]))
    u_seq = np.linspace(0.1, 0.5, horizon).reshape(-1, 1)
    x_seq = np.zeros((horizon + 1, 1))
    for t in range(horizon):
        x_seq[t + 1] = A @ x_seq[t] + B @ u_seq[t]
    y_seq = out.evaluate(u_seq, np.zeros((horizon, 1)))
    sol = DispatchSolution(
        status="optimal", objective=0.0, x_seq=x_seq, u_seq=u_seq, y_seq=y_seq,
        schedule=None, kkt=None, iterations=0,
    )
    return ssm, Policy(solution=sol, gain=gain)


class TestSimulate:
    def test_nominal_scenario_reproduces_nominal(self, ref24, ref24_box_policy):
        x, u, y = simulate(ref24_box_policy, ref24.ssm, ref24.tube.w_center)
        sol = ref24_box_policy.solution
        assert np.max(np.abs(x - sol.x_seq)) <= 1e-10
        assert np.max(np.abs(u - sol.u_seq)) <= 1e-10
        assert np.max(np.abs(y - sol.y_seq)) <= 1e-10

    def test_zero_gain_keeps_planned_controls(self, ref24, ref24_box_policy):
        batch = sample_disturbances(ref24.tube, 3, seed=9, mode="uniform")
        for w in batch.samples:
            _, u, _ = simulate(ref24_box_policy, ref24.ssm, w)
            assert np.array_equal(u, ref24_box_policy.solution.u_seq)

    def test_hand_computed_two_step_recursion(self):
        ssm, pol = scalar_policy(0.8, 2)
        w = np.array([[0.3], [-0.2]])
        x, u, y = simulate(pol, ssm, w)
        # by hand: x1 = 0.8*0 + u0 + 0.3; u1 = ubar1 + k (x1 - xbar1); ...
        k = pol.gain.k[0, 0]
        x1 = 0.8 * 0.0 + pol.solution.u_seq[0, 0] + w[0, 0]
        u1 = pol.solution.u_seq[1, 0] + k * (x1 - pol.solution.x_seq[1, 0])
        x2 = 0.8 * x1 + u1 + w[1, 0]
        assert x[1, 0] == pytest.approx(x1, abs=1e-12)
        assert u[1, 0] == pytest.approx(u1, abs=1e-12)
        assert x[2, 0] == pytest.approx(x2, abs=1e-12)

    def test_deviation_matches_autonomous_recursion(self, ref24, ref24_box_policy):
        """x(t) - xbar(t) follows the closed-loop deviation recursion."""
        batch = sample_disturbances(ref24.tube, 5, seed=13, mode="uniform")
        sol = ref24_box_policy.solution
        phi = ref24.gain.phi
        for w in batch.samples:
            x, _, _ = simulate(ref24_box_policy, ref24.ssm, w)
            dev = np.zeros(ref24.ssm.n_x)
            for t in range(ref24.ssm.horizon):
                assert np.max(np.abs((x[t] - sol.x_seq[t]) - dev)) <= 1e-10
                dev = phi @ dev + ref24.ssm.D @ (w[t] - ref24.tube.w_center[t])


class TestEvaluate:
    def test_single_center_sample_matches_nominal_cost(self, ref24, ref24_box_policy):
        tube = ref24.tube
        center_batch = sample_disturbances(
            UncertaintyTube(tube.w_center, tube.w_center, tube.w_center), 1, 0, "uniform"
        )
        met = evaluate(
            ref24_box_policy, ref24.ssm, ref24.constraints, ref24.costs, center_batch
        )
        assert met.violation_rate == 0.0
        assert met.j_expected == pytest.approx(met.j_nominal, abs=1e-9)
        assert met.j_max == pytest.approx(met.j_min, abs=1e-12)

    def test_cost_ordering_invariant(self, ref24, ref24_box_policy):
        batch = sample_disturbances(ref24.tube, 500, seed=3, mode="uniform")
        met = evaluate(ref24_box_policy, ref24.ssm, ref24.constraints, ref24.costs, batch)
        assert met.j_min <= met.j_expected <= met.j_max
        assert 0.0 <= met.violation_rate <= 1.0
        assert met.sample_count == 500

    def test_do_policy_violates_more(self, ref24, ref24_box_policy, ref24_do_policy):
        batch = sample_disturbances(ref24.tube, 1000, seed=21, mode="uniform")
        met_box = evaluate(ref24_box_policy, ref24.ssm, ref24.constraints, ref24.costs, batch)
        met_do = evaluate(ref24_do_policy, ref24.ssm, ref24.constraints, ref24.costs, batch)
        assert met_box.violation_rate == 0.0
        assert met_do.violation_rate > met_box.violation_rate
        assert met_do.violations_by_row   # histogram populated


def test_parse_method():
    assert parse_method("do") == ("do", None)
    assert parse_method("erd-box") == ("erd-box", None)
    assert parse_method("erd-budget:10") == ("erd-budget", 10.0)
    assert parse_method("ERD-Iterative-Box") == ("erd-iterative-box", None)
    with pytest.raises(ValueError):
        parse_method("erd-budget")
    with pytest.raises(ValueError):
        parse_method("lorem")
