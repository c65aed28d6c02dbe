"""Nominal dispatch problem and the affine feedback policy.

The decision variables are the states over the horizon, the control
sequence, and epigraph auxiliaries for the storage throughput terms of
the cost; dynamics and the reactive balance enter as equalities, and every
row of the (tightened) constraint families enters as an inequality with
the analysis expressions substituted through the lifted output maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compile import StateSpaceModel
from .lp import KktReport, LinearProgram, check_kkt, solve_lp
from .model import SystemModel
from .sets import UncertaintyTube
from .tighten import FeedbackGain, TightenedSchedule, choose_gain, tighten

__all__ = [
    "CostModel",
    "NominalProblem",
    "DispatchSolution",
    "Policy",
    "build_nominal_problem",
    "solve_dispatch",
    "deterministic_schedule",
    "realized_cost",
    "choose_gain",
]


@dataclass(frozen=True)
class CostModel:
    """Linear fuel/maintenance/exchange costs, $ per pu (or MW) per step."""

    chp: np.ndarray          # per CHP unit
    hp: np.ndarray
    battery: np.ndarray      # throughput cost on |battery power|
    tank: np.ndarray
    grid_price: np.ndarray   # (T,)

    def __post_init__(self) -> None:
        for name in ("chp", "hp", "battery", "tank", "grid_price"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.battery < 0) or np.any(self.tank < 0):
            raise ValueError("storage maintenance cost coefficients must be >= 0")

    @classmethod
    def from_model(cls, model: SystemModel) -> "CostModel":
        return cls(
            chp=np.array([c.cost for c in model.chp_units]),
            hp=np.array([h.cost for h in model.heat_pumps]),
            battery=np.array([b.cost for b in model.batteries]),
            tank=np.array([s.cost for s in model.tanks]),
            grid_price=model.grid.price.copy(),
        )


@dataclass(frozen=True)
class _Layout:
    """Index layout of the LP variables [x(0..T), u(0..T-1), epigraph]."""

    horizon: int
    n_x: int
    n_u: int
    n_epi: int

    def x_slice(self, t: int) -> slice:
        return slice(t * self.n_x, (t + 1) * self.n_x)

    def u_slice(self, t: int) -> slice:
        base = (self.horizon + 1) * self.n_x
        return slice(base + t * self.n_u, base + (t + 1) * self.n_u)

    def epi_slice(self, t: int) -> slice:
        base = (self.horizon + 1) * self.n_x + self.horizon * self.n_u
        return slice(base + t * self.n_epi, base + (t + 1) * self.n_epi)

    def decode(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        T = self.horizon
        x_seq = np.stack([z[self.x_slice(t)] for t in range(T + 1)])
        u_seq = np.stack([z[self.u_slice(t)] for t in range(T)]) if T else np.zeros((0, self.n_u))
        return x_seq, u_seq


@dataclass(frozen=True)
class NominalProblem:
    """The assembled LP plus the variable layout needed to decode solutions."""

    lp: LinearProgram
    ssm: StateSpaceModel
    layout: _Layout

    def decode(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.layout.decode(z)


@dataclass(frozen=True)
class DispatchSolution:
    """Nominal trajectories, objective, and the audit of the solve."""

    status: str
    objective: float | None
    x_seq: np.ndarray | None
    u_seq: np.ndarray | None
    y_seq: np.ndarray | None
    schedule: TightenedSchedule
    kkt: KktReport | None
    iterations: int
    blocking_rows: tuple[str, ...] = ()

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class Policy:
    """u(t) = u_nom(t) + K (x(t) - x_nom(t))."""

    solution: DispatchSolution
    gain: FeedbackGain

    def control(self, t: int, x: np.ndarray) -> np.ndarray:
        sol = self.solution
        return sol.u_seq[t] + self.gain.k @ (np.asarray(x) - sol.x_seq[t])


def deterministic_schedule(
    ssm: StateSpaceModel, constraints, tube: UncertaintyTube, gain: FeedbackGain
) -> TightenedSchedule:
    """Tightening disabled: the schedule produced by a zero-width tube."""
    degenerate = UncertaintyTube(tube.w_center, tube.w_center, tube.w_center)
    return tighten(ssm, constraints, degenerate, gain, mode="box")


def build_nominal_problem(
    ssm: StateSpaceModel,
    schedule: TightenedSchedule,
    costs: CostModel,
    w_center: np.ndarray,
    x0: np.ndarray | None = None,
) -> NominalProblem:
    """Assemble the nominal LP over x(0..T), u(0..T-1), and epigraph terms."""
    T = ssm.horizon
    n_x, n_u = ssm.n_x, ssm.n_u
    man = ssm.manifest
    out = ssm.output
    w_center = np.atleast_2d(np.asarray(w_center, dtype=float))
    if w_center.shape != (T, ssm.n_w):
        raise ValueError(f"w_center shape {w_center.shape} != ({T}, {ssm.n_w})")
    if x0 is None:
        x0 = ssm.x0
    if len(costs.grid_price) != T:
        raise ValueError(f"price series length {len(costs.grid_price)} != horizon {T}")

    battery_rows = man.indices("y", "battery_power")
    tank_rows = man.indices("y", "tank_flow")
    epi_rows = battery_rows + tank_rows
    epi_costs = np.concatenate([costs.battery, costs.tank])
    n_epi = len(epi_rows)
    if any(r in out.memory_rows for r in epi_rows):
        raise ValueError("storage flow rows unexpectedly carry heat-kernel memory")

    n_vars = (T + 1) * n_x + T * n_u + T * n_epi
    prob = _Layout(horizon=T, n_x=n_x, n_u=n_u, n_epi=n_epi)
    y_base = out.evaluate(np.zeros((T, n_u)), w_center)   # w and constant parts

    # objective
    c = np.zeros(n_vars)
    for t in range(T):
        sl = prob.u_slice(t)
        for k, unit in enumerate(man.indices("u", "chp_p")):
            c[sl.start + unit] += costs.chp[k]
        for k, unit in enumerate(man.indices("u", "hp_p")):
            c[sl.start + unit] += costs.hp[k]
        c[sl.start + man.index("u", "grid_p", "grid")] += costs.grid_price[t]
        esl = prob.epi_slice(t)
        c[esl] = epi_costs

    # equalities: initial state, dynamics, reactive balance
    eq_rows: list[np.ndarray] = []
    eq_rhs: list[float] = []
    eq_labels: list[str] = []

    for i in range(n_x):
        row = np.zeros(n_vars)
        row[prob.x_slice(0).start + i] = 1.0
        eq_rows.append(row)
        eq_rhs.append(float(x0[i]))
        eq_labels.append(f"initial_state[{man.name('x', i)[1]}]")

    for t in range(T):
        for i in range(n_x):
            row = np.zeros(n_vars)
            row[prob.x_slice(t + 1).start + i] = 1.0
            row[prob.x_slice(t)] -= ssm.A[i]
            row[prob.u_slice(t)] -= ssm.B[i]
            eq_rows.append(row)
            eq_rhs.append(float(ssm.D[i] @ w_center[t]))
            eq_labels.append(f"dynamics[{man.name('x', i)[1]}][t={t}]")

    if ssm.reactive_u is not None and np.any(ssm.reactive_u):
        for t in range(T):
            row = np.zeros(n_vars)
            row[prob.u_slice(t)] = ssm.reactive_u
            eq_rows.append(row)
            eq_rhs.append(float(-ssm.reactive_w @ w_center[t]))
            eq_labels.append(f"reactive_balance[t={t}]")

    # inequalities from the tightened families
    g_rows: list[np.ndarray] = []
    g_rhs: list[float] = []
    g_labels: list[str] = []

    fam = schedule.family("x")
    for si, t in enumerate(fam.steps):
        bounds = fam.tightened_bounds[si]
        for ri in range(fam.polyhedron.n_rows):
            row = np.zeros(n_vars)
            row[prob.x_slice(int(t))] = fam.polyhedron.coefficients[ri]
            g_rows.append(row)
            g_rhs.append(float(bounds[ri]))
            g_labels.append(f"x[t={t}] {fam.polyhedron.labels[ri]}")

    fam = schedule.family("u")
    for si, t in enumerate(fam.steps):
        bounds = fam.tightened_bounds[si]
        for ri in range(fam.polyhedron.n_rows):
            row = np.zeros(n_vars)
            row[prob.u_slice(int(t))] = fam.polyhedron.coefficients[ri]
            g_rows.append(row)
            g_rhs.append(float(bounds[ri]))
            g_labels.append(f"u[t={t}] {fam.polyhedron.labels[ri]}")

    fam = schedule.family("du")
    for si, t in enumerate(fam.steps):
        bounds = fam.tightened_bounds[si]
        for ri in range(fam.polyhedron.n_rows):
            row = np.zeros(n_vars)
            row[prob.u_slice(int(t))] = fam.polyhedron.coefficients[ri]
            row[prob.u_slice(int(t) - 1)] = -fam.polyhedron.coefficients[ri]
            g_rows.append(row)
            g_rhs.append(float(bounds[ri]))
            g_labels.append(f"du[t={t}] {fam.polyhedron.labels[ri]}")

    # y rows: substitute the lifted maps; u-coefficients reach back through
    # the heat kernel memory
    fam = schedule.family("y")
    y_u_coeff = _y_row_u_coefficients(ssm, fam.polyhedron.coefficients)
    for si, t in enumerate(fam.steps):
        t = int(t)
        bounds = fam.tightened_bounds[si]
        base = fam.polyhedron.coefficients @ y_base[t]
        for ri in range(fam.polyhedron.n_rows):
            row = np.zeros(n_vars)
            for tau in range(t + 1):
                block = y_u_coeff(ri, t, tau)
                if block is not None:
                    row[prob.u_slice(tau)] = block
            g_rows.append(row)
            g_rhs.append(float(bounds[ri] - base[ri]))
            g_labels.append(f"y[t={t}] {fam.polyhedron.labels[ri]}")

    fam = schedule.family("dy")
    dy_u_coeff = _y_row_u_coefficients(ssm, fam.polyhedron.coefficients)
    for si, t in enumerate(fam.steps):
        t = int(t)
        bounds = fam.tightened_bounds[si]
        base = fam.polyhedron.coefficients @ (y_base[t] - y_base[t - 1])
        for ri in range(fam.polyhedron.n_rows):
            row = np.zeros(n_vars)
            for tau in range(t + 1):
                block = dy_u_coeff(ri, t, tau)
                prev = dy_u_coeff(ri, t - 1, tau) if tau <= t - 1 else None
                combined = None
                if block is not None:
                    combined = block.copy()
                if prev is not None:
                    combined = (combined if combined is not None else np.zeros(ssm.n_u)) - prev
                if combined is not None:
                    row[prob.u_slice(tau)] = combined
            g_rows.append(row)
            g_rhs.append(float(bounds[ri] - base[ri]))
            g_labels.append(f"dy[t={t}] {fam.polyhedron.labels[ri]}")

    # epigraph rows: |storage flow| <= auxiliary
    for t in range(T):
        for k, yrow in enumerate(epi_rows):
            coeff = out.feed_u[yrow]
            base = y_base[t, yrow]
            for sign in (1.0, -1.0):
                row = np.zeros(n_vars)
                row[prob.u_slice(t)] = sign * coeff
                row[prob.epi_slice(t).start + k] = -1.0
                g_rows.append(row)
                g_rhs.append(float(-sign * base))
                g_labels.append(
                    f"epigraph[{man.name('y', yrow)[1]}][t={t}] {'pos' if sign > 0 else 'neg'}"
                )

    names = _variable_names(ssm, prob, T, epi_rows)
    lp = LinearProgram(
        c=c,
        g=np.vstack(g_rows) if g_rows else None,
        h=np.array(g_rhs) if g_rhs else None,
        a_eq=np.vstack(eq_rows) if eq_rows else None,
        b_eq=np.array(eq_rhs) if eq_rhs else None,
        names=tuple(names),
        row_labels=tuple(g_labels),
        eq_labels=tuple(eq_labels),
    )
    return NominalProblem(lp=lp, ssm=ssm, layout=prob)


def _y_row_u_coefficients(ssm: StateSpaceModel, s_rows: np.ndarray):
    """Closure returning the u(tau) coefficient of row ri's y expression at t."""
    out = ssm.output
    mem = out.memory_rows
    has_mem = out.temps is not None and len(mem) > 0
    direct = s_rows @ out.feed_u if s_rows.size else np.zeros((0, ssm.n_u))
    mem_sel = s_rows[:, mem] if has_mem and s_rows.size else None
    ti = has_mem and out.temps.kernel_ti is not None
    cache: dict[int | tuple[int, int], np.ndarray] = {}

    def coeff(ri: int, t: int, tau: int) -> np.ndarray | None:
        block = None
        if tau == t:
            block = direct[ri].copy()
        if has_mem and mem_sel is not None and np.any(mem_sel[ri]):
            key = (t - tau) if ti else (t, tau)
            if key not in cache:
                cache[key] = out.temps.kernel_at(t, tau) @ out.heat_u
            extra = mem_sel[ri] @ cache[key]
            block = extra if block is None else block + extra
        if block is not None and not np.any(block):
            return None
        return block

    return coeff


def _variable_names(ssm, prob: _Layout, T: int, epi_rows) -> list[str]:
    man = ssm.manifest
    names = []
    for t in range(T + 1):
        for i in range(ssm.n_x):
            names.append(f"x_{man.name('x', i)[1]}_{t}")
    for t in range(T):
        for i in range(ssm.n_u):
            kind, nm = man.name("u", i)
            names.append(f"u_{kind}_{nm}_{t}")
    for t in range(T):
        for r in epi_rows:
            names.append(f"abs_{man.name('y', r)[1]}_{t}")
    return names


def solve_dispatch(
    ssm: StateSpaceModel,
    schedule: TightenedSchedule,
    costs: CostModel,
    w_center: np.ndarray,
    x0: np.ndarray | None = None,
    problem: NominalProblem | None = None,
) -> DispatchSolution:
    """Build and solve the nominal problem; audit the result with KKT."""
    prob = problem or build_nominal_problem(ssm, schedule, costs, w_center, x0)
    sol = solve_lp(prob.lp)
    if not sol.is_optimal:
        return DispatchSolution(
            status=sol.status,
            objective=None,
            x_seq=None,
            u_seq=None,
            y_seq=None,
            schedule=schedule,
            kkt=None,
            iterations=sol.iterations,
            blocking_rows=sol.blocking_rows,
        )
    x_seq, u_seq = prob.decode(sol.z)
    y_seq = ssm.output.evaluate(u_seq, np.atleast_2d(w_center))
    kkt = check_kkt(prob.lp, sol)
    return DispatchSolution(
        status="optimal",
        objective=sol.objective,
        x_seq=x_seq,
        u_seq=u_seq,
        y_seq=y_seq,
        schedule=schedule,
        kkt=kkt,
        iterations=sol.iterations,
    )


def realized_cost(
    ssm: StateSpaceModel, costs: CostModel, u_seq: np.ndarray, y_seq: np.ndarray
) -> float:
    """Total cost with realized storage flows in the absolute-value terms."""
    man = ssm.manifest
    total = 0.0
    for k, i in enumerate(man.indices("u", "chp_p")):
        total += costs.chp[k] * float(np.sum(u_seq[:, i]))
    for k, i in enumerate(man.indices("u", "hp_p")):
        total += costs.hp[k] * float(np.sum(u_seq[:, i]))
    total += float(costs.grid_price @ u_seq[:, man.index("u", "grid_p", "grid")])
    for k, i in enumerate(man.indices("y", "battery_power")):
        total += costs.battery[k] * float(np.sum(np.abs(y_seq[:, i])))
    for k, i in enumerate(man.indices("y", "tank_flow")):
        total += costs.tank[k] * float(np.sum(np.abs(y_seq[:, i])))
    return total
