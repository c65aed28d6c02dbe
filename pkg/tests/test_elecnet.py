"""Power-flow fixed point, branch-flow linearization, voltage sensitivities."""

import numpy as np
import pytest

from chpdispatch.elecnet import (
    PowerFlowError,
    branch_flow_map,
    nominal_operating_point,
    voltage_sensitivities,
)
from chpdispatch.model import Branch, ElectricNetwork


def two_bus(r=0.01, x=0.01):
    return ElectricNetwork(
        n_bus=2,
        slack_bus=0,
        slack_voltage=1.0,
        v_min=np.array([0.9, 0.9]),
        v_max=np.array([1.1, 1.1]),
        branches=(Branch(0, 1, r, x, 10.0),),
    )


def chain(n, r=0.01, x=0.02):
    return ElectricNetwork(
        n_bus=n,
        slack_bus=0,
        slack_voltage=1.0,
        v_min=np.full(n, 0.9),
        v_max=np.full(n, 1.1),
        branches=tuple(Branch(i, i + 1, r, x, 10.0) for i in range(n - 1)),
    )


def exact_two_bus_voltage(r, x, p_load, q_load, v_slack=1.0):
    """Closed-form |V2| of the single-line quadratic power-flow equation."""
    # |V2|^4 + (2 (p r + q x) - |Vs|^2) |V2|^2 + (p^2 + q^2)(r^2 + x^2) = 0
    b = 2.0 * (p_load * r + q_load * x) - v_slack**2
    c = (p_load**2 + q_load**2) * (r**2 + x**2)
    disc = b * b - 4.0 * c
    assert disc >= 0
    return float(np.sqrt((-b + np.sqrt(disc)) / 2.0))


def test_no_load_flat_profile():
    net = two_bus()
    op = nominal_operating_point(net, np.zeros(2, dtype=complex))
    assert np.allclose(op.voltages, 1.0)
    assert op.residual <= 1e-10


def test_two_bus_matches_quadratic_solution():
    net = two_bus(0.01, 0.01)
    op = nominal_operating_point(net, np.array([0.0, -0.1 + 0.0j]))
    expected = exact_two_bus_voltage(0.01, 0.01, 0.1, 0.0)
    assert abs(abs(op.voltages[1]) - expected) < 1e-8


def test_reference_network_converges_in_band(ref24):
    fc = ref24.model.forecasts
    inj = -(fc.p_load_center[:, 0] + 1j * fc.q_load_center[:, 0])
    op = nominal_operating_point(ref24.model.electric, inj)
    assert op.residual <= 1e-10
    mags = op.magnitudes
    assert np.all(mags > 0.9)
    assert np.all(mags <= 1.0 + 1e-12)


def test_nonconvergence_raises():
    net = two_bus(0.5, 0.5)
    with pytest.raises(PowerFlowError):
        nominal_operating_point(net, np.array([0.0, -2.0 + 0.0j]), max_iter=20)


def test_sensitivity_analytic_two_bus_no_load():
    r, x = 0.03, 0.07
    net = two_bus(r, x)
    op = nominal_operating_point(net, np.zeros(2, dtype=complex))
    sens = voltage_sensitivities(net, op)
    assert sens.dv_dp[1, 1] == pytest.approx(r, abs=1e-12)
    assert sens.dv_dq[1, 1] == pytest.approx(x, abs=1e-12)


def test_sensitivity_slack_rows_zero(ref24):
    fc = ref24.model.forecasts
    inj = -(fc.p_load_center[:, 0] + 1j * fc.q_load_center[:, 0])
    op = nominal_operating_point(ref24.model.electric, inj)
    sens = voltage_sensitivities(ref24.model.electric, op)
    slack = ref24.model.electric.slack_bus
    assert np.all(sens.dv_dp[slack, :] == 0.0)
    assert np.all(sens.dv_dq[slack, :] == 0.0)
    assert np.all(np.isfinite(sens.dv_dp))
    assert np.all(np.isfinite(sens.dv_dq))


def test_sensitivities_match_finite_differences_33bus(ref24):
    net = ref24.model.electric
    fc = ref24.model.forecasts
    inj = -(fc.p_load_center[:, 0] + 1j * fc.q_load_center[:, 0])
    op = nominal_operating_point(net, inj)
    sens = voltage_sensitivities(net, op)
    h = 1e-5
    worst = 0.0
    for k in range(1, net.n_bus):
        for which in ("p", "q"):
            delta = h if which == "p" else 1j * h
            vp = nominal_operating_point(net, inj + delta * _unit(net.n_bus, k), tolerance=1e-13).magnitudes
            vm = nominal_operating_point(net, inj - delta * _unit(net.n_bus, k), tolerance=1e-13).magnitudes
            fd = (vp - vm) / (2.0 * h)
            an = (sens.dv_dp if which == "p" else sens.dv_dq)[:, k]
            scale = np.maximum(np.abs(fd), 1e-6)
            worst = max(worst, float(np.max(np.abs(an - fd) / scale)))
    assert worst <= 1e-3


def _unit(n, k):
    e = np.zeros(n, dtype=complex)
    e[k] = 1.0
    return e


def test_reactive_dominates_on_high_x_line():
    net = two_bus(0.01, 0.10)
    op = nominal_operating_point(net, np.array([0.0, -0.05 - 0.02j]))
    sens = voltage_sensitivities(net, op)
    assert abs(sens.dv_dq[1, 1]) > abs(sens.dv_dp[1, 1])


def test_branch_flow_trivial_cases():
    net = two_bus()
    op = nominal_operating_point(net, np.array([0.0, 1.0 + 0.0j]))
    fmap = branch_flow_map(net, op)
    # 1 pu injected at the leaf flows toward the slack
    assert abs(abs(fmap.base[0]) - 1.0) < 0.05
    assert fmap.base[0] < 0.0

    op0 = nominal_operating_point(net, np.zeros(2, dtype=complex))
    fmap0 = branch_flow_map(net, op0)
    assert np.allclose(fmap0.base, 0.0, atol=1e-12)


def test_branch_flow_exact_at_linearization_point(ref24):
    net = ref24.model.electric
    fc = ref24.model.forecasts
    inj = -(fc.p_load_center[:, 0] + 1j * fc.q_load_center[:, 0])
    op = nominal_operating_point(net, inj)
    fmap = branch_flow_map(net, op)
    again = fmap.evaluate(op.injections.real, op.injections.imag)
    assert np.allclose(again, fmap.base, atol=1e-14)


def test_three_bus_chain_unit_injection_close_to_nonlinear():
    net = chain(3, 0.005, 0.01)
    base_inj = np.zeros(3, dtype=complex)
    op = nominal_operating_point(net, base_inj)
    fmap = branch_flow_map(net, op)
    inj = np.array([0.0, 0.0, 1.0 + 0.0j])
    predicted = fmap.evaluate(inj.real, inj.imag)
    op_true = nominal_operating_point(net, inj)
    true_flows = _nonlinear_flows(net, op_true)
    losses = float(np.sum(np.abs(true_flows - predicted)))
    # both lines carry roughly 1 pu toward the slack, error within losses
    assert np.all(np.abs(np.abs(predicted) - 1.0) < 0.05)
    assert np.max(np.abs(predicted - true_flows)) <= max(losses, 0.02)


def _nonlinear_flows(net, op):
    flows = np.zeros(net.n_branch)
    for l, br in enumerate(net.branches):
        cur = (op.voltages[br.from_bus] - op.voltages[br.to_bus]) / br.impedance
        flows[l] = np.real(op.voltages[br.from_bus] * np.conj(cur))
    return flows


def test_linearization_first_order_richardson():
    net = chain(3, 0.01, 0.02)
    base = np.array([0.0, -0.2 - 0.05j, -0.3 - 0.1j])
    op = nominal_operating_point(net, base)
    fmap = branch_flow_map(net, op)

    def error(scale):
        inj = base + np.array([0.0, scale, scale * 0.5])
        pred = fmap.evaluate(inj.real, inj.imag)
        truth = _nonlinear_flows(net, nominal_operating_point(net, inj, tolerance=1e-13))
        return float(np.max(np.abs(pred - truth)))

    e_full = error(0.2)
    e_half = error(0.1)
    assert e_full / max(e_half, 1e-15) >= 2.0
