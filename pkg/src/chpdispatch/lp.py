"""Bundled dense linear-program solver.

A bounded-variable revised simplex (two-phase, Dantzig pricing with a
Bland's-rule fallback against cycling) behind a small problem/solution
interface.  Row-heavy problems are transposed and solved through their
dual, which keeps the working basis at the size of the variable count;
the primal solution is then read off the dual multipliers.  Nothing here
depends on an external solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinearProgram",
    "LpSolution",
    "KktReport",
    "solve_lp",
    "check_kkt",
    "write_lp_text",
]

FEAS_TOL = 1e-8
COST_TOL = 1e-9
REFACTOR_EVERY = 100
STALL_LIMIT = 60


@dataclass(frozen=True)
class LinearProgram:
    """min c^T z  s.t.  G z <= h,  A z = b,  lower <= z <= upper."""

    c: np.ndarray
    g: np.ndarray | None = None
    h: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    names: tuple[str, ...] = ()
    row_labels: tuple[str, ...] = ()
    eq_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float)
        n = c.shape[0]
        g = np.zeros((0, n)) if self.g is None else np.atleast_2d(np.asarray(self.g, dtype=float))
        h = np.zeros(0) if self.h is None else np.atleast_1d(np.asarray(self.h, dtype=float))
        a = np.zeros((0, n)) if self.a_eq is None else np.atleast_2d(np.asarray(self.a_eq, dtype=float))
        b = np.zeros(0) if self.b_eq is None else np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        lo = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        up = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        for name, val in (("c", c), ("g", g), ("h", h), ("a_eq", a), ("b_eq", b)):
            if val.size and not np.all(np.isfinite(val)):
                raise ValueError(f"non-finite coefficients in {name}")
        if g.shape != (h.shape[0], n) or a.shape != (b.shape[0], n):
            raise ValueError(
                f"dimension mismatch: c has {n} vars, G {g.shape}, h {h.shape}, "
                f"A {a.shape}, b {b.shape}"
            )
        if lo.shape != (n,) or up.shape != (n,):
            raise ValueError("bound arrays must match the variable count")
        if np.any(lo > up):
            raise ValueError("some lower bound exceeds its upper bound")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "a_eq", a)
        object.__setattr__(self, "b_eq", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.g.shape[0]

    @property
    def n_eq(self) -> int:
        return self.a_eq.shape[0]


@dataclass(frozen=True)
class LpSolution:
    status: str                      # optimal | infeasible | unbounded | failed
    z: np.ndarray | None = None
    objective: float | None = None
    duals_ineq: np.ndarray | None = None
    duals_eq: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    blocking_rows: tuple[str, ...] = ()

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class KktReport:
    primal_residual: float
    dual_residual: float
    complementarity: float
    gap: float

    def within(self, primal: float = FEAS_TOL, gap: float = 1e-7) -> bool:
        return self.primal_residual <= primal and self.gap <= gap


class _Simplex:
    """Bounded-variable revised simplex on min c^T x, A x = b, l <= x <= u.

    Nonbasic variables sit at a finite bound (or at zero when free); the
    dense basis inverse is maintained by product-form updates with periodic
    refactorization.
    """

    AT_LOWER = 0
    AT_UPPER = 1
    BASIC = 2

    def __init__(self, a: np.ndarray, b: np.ndarray, lower: np.ndarray, upper: np.ndarray):
        self.a = a
        self.b = b
        self.lower = lower
        self.upper = upper
        self.m, self.n = a.shape
        self.iterations = 0
        self.free_mask = ~np.isfinite(lower) & ~np.isfinite(upper)
        self.ray: np.ndarray | None = None

    def _nonbasic_values(self) -> np.ndarray:
        vals = np.where(
            self.state == self.AT_UPPER,
            np.where(np.isfinite(self.upper), self.upper, 0.0),
            np.where(np.isfinite(self.lower), self.lower, 0.0),
        )
        vals[self.state == self.BASIC] = 0.0
        return vals

    def _recompute(self) -> None:
        self.binv = np.linalg.inv(self.a[:, self.basis])
        self.nbvals = self._nonbasic_values()
        self.xb = self.binv @ (self.b - self.a @ self.nbvals)

    def run(self, c: np.ndarray, basis: list[int], state: np.ndarray, max_iter: int):
        """Returns (status, x, duals, reduced_costs)."""
        self.basis = list(basis)
        self.state = state
        self._recompute()
        stall = 0
        at_lower_state, at_upper_state = self.AT_LOWER, self.AT_UPPER
        for it in range(max_iter):
            self.iterations += 1
            if it and it % REFACTOR_EVERY == 0:
                self._recompute()
            duals = c[self.basis] @ self.binv
            reduced = c - duals @ self.a
            use_bland = stall > STALL_LIMIT

            at_lower = self.state == at_lower_state
            at_upper = self.state == at_upper_state
            can_inc = (at_lower & (reduced < -COST_TOL)) | (
                at_lower & self.free_mask & (reduced < -COST_TOL)
            )
            can_dec = (at_upper & (reduced > COST_TOL)) | (
                at_lower & self.free_mask & (reduced > COST_TOL)
            )
            eligible = can_inc | can_dec
            if not np.any(eligible):
                x = self.nbvals.copy()
                x[self.basis] = self.xb
                return "optimal", x, duals, reduced
            if use_bland:
                entering = int(np.argmax(eligible))
            else:
                score = np.where(eligible, np.abs(reduced), -1.0)
                entering = int(np.argmax(score))
            direction = 1.0 if can_inc[entering] else -1.0

            col = self.binv @ self.a[:, entering]
            delta = -direction * col
            basis_arr = np.asarray(self.basis)
            theta = np.inf
            leaving = -1
            leaving_to = at_lower_state
            span = self.upper[entering] - self.lower[entering]
            if np.isfinite(span):
                theta = span
            up_lim = self.upper[basis_arr]
            lo_lim = self.lower[basis_arr]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_up = np.where(
                    (delta > 1e-11) & np.isfinite(up_lim), (up_lim - self.xb) / delta, np.inf
                )
                t_lo = np.where(
                    (delta < -1e-11) & np.isfinite(lo_lim), (lo_lim - self.xb) / delta, np.inf
                )
            t_up = np.maximum(t_up, 0.0)
            t_lo = np.maximum(t_lo, 0.0)
            ratios = np.minimum(t_up, t_lo)
            if ratios.size:
                if use_bland:
                    best = np.min(ratios)
                    candidates = np.where(ratios <= best + 1e-12)[0]
                    k = candidates[int(np.argmin(basis_arr[candidates]))]
                else:
                    k = int(np.argmin(ratios))
                if ratios[k] < theta - 1e-12:
                    theta = float(ratios[k])
                    leaving = k
                    leaving_to = at_upper_state if t_up[k] <= t_lo[k] else at_lower_state
            if not np.isfinite(theta):
                ray = np.zeros(self.n)
                ray[entering] = direction
                ray[basis_arr] = -direction * col
                self.ray = ray
                return "unbounded", None, duals, reduced
            if theta < 1e-10:
                stall += 1
            else:
                stall = 0

            if leaving < 0:
                # bound flip: entering slides to its opposite bound
                self.xb = self.xb + delta * theta
                self.state[entering] = (
                    at_upper_state if self.state[entering] == at_lower_state else at_lower_state
                )
                self.nbvals[entering] = (
                    self.upper[entering]
                    if self.state[entering] == at_upper_state
                    else self.lower[entering]
                )
                continue

            out = self.basis[leaving]
            entering_value = self.nbvals[entering] + direction * theta
            self.xb = self.xb + delta * theta
            self.xb[leaving] = entering_value
            self.state[out] = leaving_to
            self.nbvals[out] = self.upper[out] if leaving_to == at_upper_state else self.lower[out]
            self.state[entering] = self.BASIC
            self.nbvals[entering] = 0.0
            self.basis[leaving] = entering

            pivot = col[leaving]
            if abs(pivot) < 1e-11:
                self._recompute()
            else:
                row = self.binv[leaving].copy()
                factor = col / pivot
                self.binv -= np.outer(factor, row)
                self.binv[leaving] = row / pivot
        return "failed", None, None, None


def _solve_standard(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
):
    """Two-phase bounded simplex.

    Returns (status, x, duals, reduced, iterations, certificate) where the
    certificate is the phase-1 duals on infeasibility or the unbounded ray.
    """
    m, n = a.shape
    if m == 0:
        x, status = _solve_boxed(c, lower, upper)
        return status, x, np.zeros(0), c.copy(), 0, None

    x_start = np.where(np.isfinite(lower), lower, np.where(np.isfinite(upper), upper, 0.0))
    resid = b - a @ x_start
    sign = np.where(resid >= 0, 1.0, -1.0)
    a1 = np.hstack([a, np.diag(sign)])
    lower1 = np.concatenate([lower, np.zeros(m)])
    upper1 = np.concatenate([upper, np.full(m, np.inf)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    state = np.empty(n + m, dtype=int)
    state[:n] = np.where(np.isfinite(lower), _Simplex.AT_LOWER, np.where(np.isfinite(upper), _Simplex.AT_UPPER, _Simplex.AT_LOWER))
    state[n:] = _Simplex.BASIC
    basis = list(range(n, n + m))

    max_iter = 200 * (m + n) + 10000
    sx = _Simplex(a1, b, lower1, upper1)
    status, x1, duals1, _ = sx.run(c1, basis, state, max_iter)
    iters = sx.iterations
    if status == "failed" or status == "unbounded":
        return "failed", None, None, None, iters, None
    if float(c1 @ x1) > 1e-7:
        return "infeasible", None, None, None, iters, duals1

    lower1[n:] = 0.0
    upper1[n:] = 0.0
    c2 = np.concatenate([c, np.zeros(m)])
    state = sx.state
    state[n:][state[n:] != _Simplex.BASIC] = _Simplex.AT_LOWER
    sx2 = _Simplex(a1, b, lower1, upper1)
    status, x2, duals2, reduced2 = sx2.run(c2, sx.basis, state, max_iter)
    iters += sx2.iterations
    if status == "optimal":
        return "optimal", x2[:n], duals2, reduced2[:n], iters, None
    if status == "unbounded":
        ray = sx2.ray[:n] if sx2.ray is not None else None
        return "unbounded", None, duals2, None, iters, ray
    return "failed", None, None, None, iters, None


def _solve_boxed(c: np.ndarray, lower: np.ndarray, upper: np.ndarray):
    """Rowless LP: each variable independently runs to its cheaper bound."""
    x = np.zeros_like(c)
    pos = c > 0
    neg = c < 0
    if np.any(pos & ~np.isfinite(lower)) or np.any(neg & ~np.isfinite(upper)):
        return None, "unbounded"
    x[pos] = lower[pos]
    x[neg] = upper[neg]
    zero = ~pos & ~neg
    x[zero] = np.clip(0.0, lower[zero], upper[zero])
    return x, "optimal"


def solve_lp(lp: LinearProgram, force_primal: bool = False) -> LpSolution:
    """Solve the LP; deterministic for identical inputs.

    Problems with many more rows than variables are solved through their
    dual so the working basis stays small; the primal solution and row
    duals are recovered from the dual solve.
    """
    m_total = lp.n_ineq + lp.n_eq
    if m_total == 0:
        x, status = _solve_boxed(lp.c, lp.lower, lp.upper)
        if status != "optimal":
            return LpSolution(status=status)
        return LpSolution(
            status="optimal",
            z=x,
            objective=float(lp.c @ x),
            duals_ineq=np.zeros(0),
            duals_eq=np.zeros(0),
            reduced_costs=lp.c.copy(),
        )
    if not force_primal and m_total > max(2 * lp.n_vars, 200):
        return _solve_via_dual(lp)
    return _solve_primal(lp)


def _solve_primal(lp: LinearProgram) -> LpSolution:
    n, m1, m2 = lp.n_vars, lp.n_ineq, lp.n_eq
    a = np.zeros((m1 + m2, n + m1))
    a[:m1, :n] = lp.g
    a[:m1, n:] = np.eye(m1)
    a[m1:, :n] = lp.a_eq
    b = np.concatenate([lp.h, lp.b_eq])
    lower = np.concatenate([lp.lower, np.zeros(m1)])
    upper = np.concatenate([lp.upper, np.full(m1, np.inf)])
    c = np.concatenate([lp.c, np.zeros(m1)])
    status, x, duals, reduced, iters, cert = _solve_standard(a, b, c, lower, upper)
    if status == "infeasible":
        return LpSolution(
            status="infeasible",
            iterations=iters,
            blocking_rows=_rows_from_weights(lp, cert),
        )
    if status != "optimal":
        return LpSolution(status=status, iterations=iters)
    z = x[:n]
    lam = -duals[:m1] if m1 else np.zeros(0)
    nu = -duals[m1:] if m2 else np.zeros(0)
    lam = np.maximum(lam, 0.0)
    return LpSolution(
        status="optimal",
        z=z,
        objective=float(lp.c @ z),
        duals_ineq=lam,
        duals_eq=nu,
        reduced_costs=reduced,
        iterations=iters,
    )


def _solve_via_dual(lp: LinearProgram) -> LpSolution:
    n, m1, m2 = lp.n_vars, lp.n_ineq, lp.n_eq
    fin_lo = np.where(np.isfinite(lp.lower))[0]
    fin_up = np.where(np.isfinite(lp.upper))[0]
    nl, nu_count = len(fin_lo), len(fin_up)

    # dual in min form: min h^T lam + b^T nu - l^T mu_l + u^T mu_u
    #   s.t. G^T lam + A^T nu - mu_l + mu_u = -c;  lam, mu >= 0, nu free
    cols = m1 + m2 + nl + nu_count
    a_d = np.zeros((n, cols))
    if m1:
        a_d[:, :m1] = lp.g.T
    if m2:
        a_d[:, m1 : m1 + m2] = lp.a_eq.T
    a_d[fin_lo, m1 + m2 + np.arange(nl)] = -1.0
    a_d[fin_up, m1 + m2 + nl + np.arange(nu_count)] = 1.0
    b_d = -lp.c
    c_d = np.concatenate([lp.h, lp.b_eq, -lp.lower[fin_lo], lp.upper[fin_up]])
    lower_d = np.concatenate([np.zeros(m1), np.full(m2, -np.inf), np.zeros(nl + nu_count)])
    upper_d = np.full(cols, np.inf)

    status, y, duals, _, iters, cert = _solve_standard(a_d, b_d, c_d, lower_d, upper_d)
    if status == "optimal":
        z = duals.copy()
        lam = y[:m1]
        nu = y[m1 : m1 + m2]
        return LpSolution(
            status="optimal",
            z=z,
            objective=float(lp.c @ z),
            duals_ineq=lam,
            duals_eq=nu,
            reduced_costs=lp.c + lp.g.T @ lam + lp.a_eq.T @ nu,
            iterations=iters,
        )
    if status == "unbounded":
        # the unbounded dual ray is a Farkas certificate of primal infeasibility
        return LpSolution(
            status="infeasible",
            iterations=iters,
            blocking_rows=_rows_from_weights(lp, cert),
        )
    if status == "infeasible":
        # dual infeasible: primal unbounded if feasible, else infeasible
        probe = _solve_primal(
            LinearProgram(
                c=np.zeros(n), g=lp.g, h=lp.h, a_eq=lp.a_eq, b_eq=lp.b_eq,
                lower=lp.lower, upper=lp.upper,
                row_labels=lp.row_labels, eq_labels=lp.eq_labels,
            )
        )
        if probe.status == "optimal":
            return LpSolution(status="unbounded", iterations=iters + probe.iterations)
        return LpSolution(
            status="infeasible",
            iterations=iters + probe.iterations,
            blocking_rows=probe.blocking_rows,
        )
    return LpSolution(status="failed", iterations=iters)


def _rows_from_weights(lp: LinearProgram, weights: np.ndarray | None) -> tuple[str, ...]:
    """Name constraint rows carrying weight in an infeasibility certificate."""
    if weights is None or weights.size == 0:
        return ()
    m1 = lp.n_ineq
    weights = np.asarray(weights)
    scale = float(np.max(np.abs(weights)))
    if scale <= 0:
        return ()
    names: list[str] = []
    for i in np.where(np.abs(weights) > 1e-6 * scale)[0]:
        if i < m1:
            names.append(lp.row_labels[i] if lp.row_labels else f"ineq[{i}]")
        elif i < m1 + lp.n_eq:
            k = i - m1
            names.append(lp.eq_labels[k] if lp.eq_labels else f"eq[{k}]")
    return tuple(names[:20])


def check_kkt(lp: LinearProgram, sol: LpSolution) -> KktReport:
    """Primal/dual residuals, complementary slackness, and the duality gap."""
    if not sol.is_optimal:
        raise ValueError("KKT audit requires an optimal solution")
    z = sol.z
    lam = sol.duals_ineq if sol.duals_ineq is not None else np.zeros(lp.n_ineq)
    nu = sol.duals_eq if sol.duals_eq is not None else np.zeros(lp.n_eq)

    primal = 0.0
    slack = np.zeros(0)
    if lp.n_ineq:
        slack = lp.h - lp.g @ z
        primal = max(primal, float(np.max(-slack, initial=0.0)))
    if lp.n_eq:
        primal = max(primal, float(np.max(np.abs(lp.a_eq @ z - lp.b_eq), initial=0.0)))
    finite_l = np.isfinite(lp.lower)
    finite_u = np.isfinite(lp.upper)
    if np.any(finite_l):
        primal = max(primal, float(np.max(lp.lower[finite_l] - z[finite_l], initial=0.0)))
    if np.any(finite_u):
        primal = max(primal, float(np.max(z[finite_u] - lp.upper[finite_u], initial=0.0)))

    r = lp.c.copy()
    if lp.n_ineq:
        r = r + lp.g.T @ lam
    if lp.n_eq:
        r = r + lp.a_eq.T @ nu
    mu_l = np.where(finite_l, np.maximum(r, 0.0), 0.0)
    mu_u = np.where(finite_u, np.maximum(-r, 0.0), 0.0)
    dual = float(np.max(np.abs(r - mu_l + mu_u), initial=0.0))
    dual = max(dual, float(np.max(-lam, initial=0.0)))

    comp = 0.0
    if lp.n_ineq:
        comp = float(np.max(np.abs(lam * slack), initial=0.0))
    if np.any(finite_l):
        comp = max(comp, float(np.max(np.abs(mu_l[finite_l] * (z - lp.lower)[finite_l]), initial=0.0)))
    if np.any(finite_u):
        comp = max(comp, float(np.max(np.abs(mu_u[finite_u] * (lp.upper - z)[finite_u]), initial=0.0)))

    dual_obj = 0.0
    if lp.n_ineq:
        dual_obj -= float(lp.h @ lam)
    if lp.n_eq:
        dual_obj -= float(lp.b_eq @ nu)
    dual_obj += float(lp.lower[finite_l] @ mu_l[finite_l])
    dual_obj -= float(lp.upper[finite_u] @ mu_u[finite_u])
    obj = float(lp.c @ z)
    gap = abs(obj - dual_obj) / (1.0 + abs(obj))
    return KktReport(primal_residual=primal, dual_residual=dual, complementarity=comp, gap=gap)


def write_lp_text(lp: LinearProgram) -> str:
    """Serialize in the plain LP interchange format for external cross-checks."""

    def name(i: int) -> str:
        return lp.names[i] if lp.names else f"z{i}"

    def expr(row: np.ndarray) -> str:
        parts = []
        for i, v in enumerate(row):
            if v == 0:
                continue
            sign = "+" if v >= 0 else "-"
            parts.append(f"{sign} {abs(v):.12g} {name(i)}")
        return " ".join(parts) if parts else "0 " + name(0)

    lines = ["Minimize", " obj: " + expr(lp.c), "Subject To"]
    for k in range(lp.n_ineq):
        label = lp.row_labels[k] if lp.row_labels else f"r{k}"
        lines.append(f" {label}: " + expr(lp.g[k]) + f" <= {lp.h[k]:.12g}")
    for k in range(lp.n_eq):
        label = lp.eq_labels[k] if lp.eq_labels else f"e{k}"
        lines.append(f" {label}: " + expr(lp.a_eq[k]) + f" = {lp.b_eq[k]:.12g}")
    lines.append("Bounds")
    for i in range(lp.n_vars):
        lo, up = lp.lower[i], lp.upper[i]
        if np.isfinite(lo) and np.isfinite(up):
            lines.append(f" {lo:.12g} <= {name(i)} <= {up:.12g}")
        elif np.isfinite(lo):
            lines.append(f" {name(i)} >= {lo:.12g}")
        elif np.isfinite(up):
            lines.append(f" -inf <= {name(i)} <= {up:.12g}")
        else:
            lines.append(f" {name(i)} free")
    lines.append("End")
    return "\n".join(lines) + "\n"
