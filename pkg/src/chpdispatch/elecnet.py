"""Linearized power flow for the radial distribution network.

The nominal operating point is the fixed point of the impedance-matrix
relation V = V_slack + Z conj(S / V) over the non-slack buses.  Branch
active flows and voltage magnitudes are then linearized at that point;
the voltage sensitivities solve the implicit conjugate-derivative system
exactly rather than ignoring the voltage-dependence of nodal currents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ElectricNetwork

__all__ = [
    "OperatingPoint",
    "SensitivityMatrices",
    "BranchFlowMap",
    "PowerFlowError",
    "nominal_operating_point",
    "branch_flow_map",
    "voltage_sensitivities",
]

MAX_ITER = 100
TOLERANCE = 1e-10


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class OperatingPoint:
    """Converged complex voltages and the injections that produced them."""

    voltages: np.ndarray      # complex, per bus
    injections: np.ndarray    # complex nodal power, per bus (slack entry unused)
    residual: float

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.voltages)


@dataclass(frozen=True)
class SensitivityMatrices:
    """d|V|/dP and d|V|/dQ, n_bus x n_bus, slack row and column zero."""

    dv_dp: np.ndarray
    dv_dq: np.ndarray
    dv_dp_complex: np.ndarray
    dv_dq_complex: np.ndarray


@dataclass(frozen=True)
class BranchFlowMap:
    """Affine map T(P, Q) = base + dT_dP (P - P0) + dT_dQ (Q - Q0).

    P and Q are full nodal injection vectors; the slack columns are zero
    because the bus behind the fixed voltage absorbs any imbalance.
    """

    base: np.ndarray          # flows at the operating point, per branch
    dt_dp: np.ndarray         # n_branch x n_bus
    dt_dq: np.ndarray
    p0: np.ndarray
    q0: np.ndarray

    def evaluate(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return self.base + self.dt_dp @ (p - self.p0) + self.dt_dq @ (q - self.q0)


def _impedance_matrix(net: ElectricNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Z over non-slack buses (inverse of the reduced admittance matrix)."""
    n = net.n_bus
    y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        adm = 1.0 / br.impedance
        i, j = br.from_bus, br.to_bus
        y[i, i] += adm
        y[j, j] += adm
        y[i, j] -= adm
        y[j, i] -= adm
    keep = [i for i in range(n) if i != net.slack_bus]
    if not keep:
        return np.zeros((0, 0), dtype=complex), np.asarray(keep, dtype=int)
    y_red = y[np.ix_(keep, keep)]
    try:
        z = np.linalg.inv(y_red)
    except np.linalg.LinAlgError as exc:
        raise PowerFlowError("singular reduced admittance matrix (disconnected network?)") from exc
    return z, np.asarray(keep, dtype=int)


def nominal_operating_point(
    net: ElectricNetwork,
    injections: np.ndarray,
    tolerance: float = TOLERANCE,
    max_iter: int = MAX_ITER,
) -> OperatingPoint:
    """Fixed-point power flow from a flat start.

    ``injections`` is a complex vector over all buses (generation positive);
    the slack entry is ignored.  Raises :class:`PowerFlowError` if the
    residual does not reach ``tolerance`` within ``max_iter`` sweeps.
    """
    injections = np.asarray(injections, dtype=complex)
    if injections.shape != (net.n_bus,):
        raise ValueError(f"injections shape {injections.shape} != ({net.n_bus},)")
    z, keep = _impedance_matrix(net)
    v_slack = complex(net.slack_voltage)
    v = np.full(len(keep), v_slack, dtype=complex)
    s = injections[keep]
    residual = 0.0
    for _ in range(max_iter):
        v_new = v_slack + z @ np.conj(s / v)
        residual = float(np.max(np.abs(v_new - v))) if len(v) else 0.0
        v = v_new
        if residual <= tolerance:
            break
    else:
        raise PowerFlowError(
            f"power flow did not converge: residual {residual:.3e} after {max_iter} iterations"
        )
    full = np.full(net.n_bus, v_slack, dtype=complex)
    full[keep] = v
    return OperatingPoint(voltages=full, injections=injections, residual=residual)


def voltage_sensitivities(net: ElectricNetwork, op: OperatingPoint) -> SensitivityMatrices:
    """Solve the implicit sensitivity system at the operating point.

    For each injection bus k the complex derivative u = dV/dP_k satisfies
    u = a - M conj(u) with M_ij = Z_ij conj(S_j) / conj(V_j)^2 and
    a = Z[:, k] / conj(V_k); the reactive case uses a = -j Z[:, k] / conj(V_k).
    The conjugation couples real and imaginary parts, so the system is
    solved as a single real 2n x 2n factorization shared by every column.
    """
    z, keep = _impedance_matrix(net)
    n = net.n_bus
    m = len(keep)
    dv_dp = np.zeros((n, n))
    dv_dq = np.zeros((n, n))
    dv_dp_c = np.zeros((n, n), dtype=complex)
    dv_dq_c = np.zeros((n, n), dtype=complex)
    if m == 0:
        return SensitivityMatrices(dv_dp, dv_dq, dv_dp_c, dv_dq_c)

    v = op.voltages[keep]
    s = op.injections[keep]
    coup = z * (np.conj(s) / np.conj(v) ** 2)[np.newaxis, :]

    # real block system for u + M conj(u) = a
    big = np.zeros((2 * m, 2 * m))
    big[:m, :m] = np.eye(m) + coup.real
    big[:m, m:] = coup.imag
    big[m:, :m] = coup.imag
    big[m:, m:] = np.eye(m) - coup.real
    rhs_p = z / np.conj(v)[np.newaxis, :]
    rhs_q = -1j * rhs_p
    try:
        lu_rhs = np.linalg.solve(
            big,
            np.vstack(
                [
                    np.hstack([rhs_p.real, rhs_q.real]),
                    np.hstack([rhs_p.imag, rhs_q.imag]),
                ]
            ),
        )
    except np.linalg.LinAlgError as exc:
        raise PowerFlowError("singular voltage-sensitivity system (degenerate voltages)") from exc
    u_p = lu_rhs[:m, :m] + 1j * lu_rhs[m:, :m]
    u_q = lu_rhs[:m, m:] + 1j * lu_rhs[m:, m:]

    mag_factor = (np.conj(v) / np.abs(v))[:, np.newaxis]
    dv_dp[np.ix_(keep, keep)] = np.real(mag_factor * u_p)
    dv_dq[np.ix_(keep, keep)] = np.real(mag_factor * u_q)
    dv_dp_c[np.ix_(keep, keep)] = u_p
    dv_dq_c[np.ix_(keep, keep)] = u_q
    return SensitivityMatrices(dv_dp, dv_dq, dv_dp_c, dv_dq_c)


def branch_flow_map(
    net: ElectricNetwork,
    op: OperatingPoint,
    sens: SensitivityMatrices | None = None,
) -> BranchFlowMap:
    """Linearize sending-end active branch flows at the operating point.

    T_l = Re[V_from conj((V_from - V_to) / z_l)]; derivatives follow from the
    complex voltage sensitivities by the product rule, so the map reproduces
    the operating-point flows exactly and is first-order accurate nearby.
    """
    if net.n_branch and not net.is_connected():
        raise PowerFlowError("disconnected network has no meaningful flow map")
    if sens is None:
        sens = voltage_sensitivities(net, op)
    n_br = net.n_branch
    n = net.n_bus
    base = np.zeros(n_br)
    dt_dp = np.zeros((n_br, n))
    dt_dq = np.zeros((n_br, n))
    v = op.voltages
    for l, br in enumerate(net.branches):
        i, j = br.from_bus, br.to_bus
        current = (v[i] - v[j]) / br.impedance
        base[l] = np.real(v[i] * np.conj(current))
        for dv_c, target in ((sens.dv_dp_complex, dt_dp), (sens.dv_dq_complex, dt_dq)):
            du = dv_c[i, :]
            dcur = (dv_c[i, :] - dv_c[j, :]) / br.impedance
            target[l, :] = np.real(du * np.conj(current) + v[i] * np.conj(dcur))
    return BranchFlowMap(
        base=base,
        dt_dp=dt_dp,
        dt_dq=dt_dq,
        p0=op.injections.real.copy(),
        q0=op.injections.imag.copy(),
    )
