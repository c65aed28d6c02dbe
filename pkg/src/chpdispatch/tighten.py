"""Constraint tightening against time-variant interval uncertainty.

Every constrained quantity (state, control, analysis row, or a ramp
difference) deviates from its nominal trajectory by a linear function of
the disturbance deviations; the worst case of that linear functional over
the per-step boxes is a 1-norm (dual of the infinity norm), and over the
budget set it is the partial-sum form of the box/1-norm intersection.
Reductions are computed directly from those closed forms; the iterative
variant solves one support LP per row and step instead and exists as an
oracle and timing baseline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .compile import ConstraintFamily, StateSpaceModel
from .lp import LinearProgram, solve_lp
from .sets import PolyhedronH, UncertaintyTube

__all__ = [
    "FeedbackGain",
    "ReachableSets",
    "FamilySchedule",
    "TightenedSchedule",
    "TighteningInfeasibleError",
    "choose_gain",
    "reachable_sets",
    "support_box",
    "gamma",
    "tighten",
    "tighten_iterative_lp",
]

SPECTRAL_WARN = 1.0 + 1e-9
SPECTRAL_CAP = 1.1


class TighteningInfeasibleError(RuntimeError):
    def __init__(self, family: str, step: int, row: str, message: str):
        self.family = family
        self.step = step
        self.row = row
        super().__init__(f"family '{family}' step {step} row '{row}': {message}")


@dataclass(frozen=True)
class FeedbackGain:
    """Feedback matrix K and the closed-loop matrix Phi = A + B K."""

    k: np.ndarray
    phi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.k)

    def spectral_radius(self) -> float:
        if self.phi.size == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.phi))))


def choose_gain(
    ssm: StateSpaceModel,
    k: np.ndarray | None = None,
    spectral_cap: float = SPECTRAL_CAP,
) -> FeedbackGain:
    """K = 0 by default; a configured K is validated against the radius cap."""
    n_x, n_u = ssm.n_x, ssm.n_u
    if k is None:
        k = np.zeros((n_u, n_x))
    k = np.asarray(k, dtype=float)
    if k.shape != (n_u, n_x):
        raise ValueError(f"gain shape {k.shape} != ({n_u}, {n_x})")
    gain = FeedbackGain(k=k, phi=ssm.A + ssm.B @ k)
    rho = gain.spectral_radius()
    if rho > spectral_cap:
        raise ValueError(
            f"closed-loop spectral radius {rho:.6g} exceeds the cap {spectral_cap:.6g}"
        )
    if rho > SPECTRAL_WARN:
        warnings.warn(
            f"closed-loop spectral radius {rho:.6g} > 1: reachable sets grow "
            "over the horizon",
            stacklevel=2,
        )
    return gain


@dataclass(frozen=True)
class ReachableSets:
    """Exact generator form of the deviation sets reachable from zero.

    The set at step t is the sum over i < t of Phi^(t-1-i) D W_dev(i) where
    W_dev(i) is the deviation box at step i; ``powers[k]`` stores Phi^k D.
    """

    powers: np.ndarray        # (T, n_x, n_w)
    tube: UncertaintyTube

    @property
    def horizon(self) -> int:
        return self.powers.shape[0]

    def generators(self, t: int) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """(matrix, dev_lo, dev_hi) triples whose box images sum to the set."""
        if not 1 <= t <= self.horizon:
            raise ValueError(f"t must be in [1, {self.horizon}]")
        lo, hi = self.tube.deviation_bounds()
        return [(self.powers[t - 1 - i], lo[i], hi[i]) for i in range(t)]

    def support(self, direction: np.ndarray, t: int) -> float:
        """sup of direction^T x over the set at step t (exact)."""
        total = 0.0
        for mat, lo, hi in self.generators(t):
            v = direction @ mat
            total += float(np.sum(np.where(v >= 0, v * hi, v * lo)))
        return total

    def interval_hull(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate support bounds of the set at step t."""
        n_x = self.powers.shape[1]
        lo = np.zeros(n_x)
        hi = np.zeros(n_x)
        for mat, dlo, dhi in self.generators(t):
            hi += np.sum(np.where(mat >= 0, mat * dhi, mat * dlo), axis=1)
            lo += np.sum(np.where(mat >= 0, mat * dlo, mat * dhi), axis=1)
        return lo, hi


def reachable_sets(
    ssm: StateSpaceModel, tube: UncertaintyTube, gain: FeedbackGain
) -> ReachableSets:
    T = ssm.horizon
    if tube.horizon != T or tube.n_channels != ssm.n_w:
        raise ValueError(
            f"tube shape ({tube.horizon}, {tube.n_channels}) does not match "
            f"horizon {T} and n_w {ssm.n_w}"
        )
    rho = gain.spectral_radius()
    if rho > SPECTRAL_CAP:
        raise ValueError(f"spectral radius {rho:.6g} beyond cap; horizon powers overflow")
    powers = np.zeros((T, ssm.n_x, ssm.n_w))
    mat = ssm.D.copy()
    for k in range(T):
        powers[k] = mat
        mat = gain.phi @ mat
    return ReachableSets(powers=powers, tube=tube)


def support_box(phi_w: np.ndarray, offset: np.ndarray | None = None) -> float:
    """Worst case of a linear functional over the unit box: the 1-norm.

    ``phi_w`` is the already-scaled coefficient row; when ``offset`` is given
    (the normalized set center), the affine term phi_w . offset is added.
    """
    phi_w = np.asarray(phi_w, dtype=float)
    total = float(np.sum(np.abs(phi_w)))
    if offset is not None:
        total += float(phi_w @ np.asarray(offset, dtype=float))
    return total


def gamma(v: np.ndarray, budget: float) -> float:
    """Worst case of v . w over the budget set {|w|_inf <= 1, |w|_1 <= budget}.

    Equals the sum of the floor(budget) largest magnitudes plus the fraction
    of the next one, clipped at the full 1-norm; also the minimum over
    thresholds of budget*theta + sum(max(|v_k| - theta, 0)).
    """
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    return float(gamma_batch(np.atleast_2d(np.asarray(v, dtype=float)), budget)[0])


def gamma_batch(v: np.ndarray, budget: float) -> np.ndarray:
    """Vectorized gamma over the rows of v (shape (..., n))."""
    n = v.shape[-1]
    if n == 0:
        return np.zeros(v.shape[:-1])
    if budget >= n:
        # inactive budget recovers the 1-norm exactly (same summation order)
        return np.abs(v).sum(axis=-1)
    mags = np.sort(np.abs(v), axis=-1)[..., ::-1]
    whole = int(np.floor(budget))
    frac = budget - whole
    head = mags[..., :whole].sum(axis=-1) if whole else np.zeros(mags.shape[:-1])
    if whole < n and frac > 0:
        head = head + frac * mags[..., whole]
    return head


@dataclass(frozen=True)
class FamilySchedule:
    """Per-step reductions for one constraint family."""

    polyhedron: PolyhedronH
    steps: np.ndarray                 # the t each row block applies to
    reductions: np.ndarray            # (n_steps, n_rows) >= worst-case deviation
    empty_steps: np.ndarray           # bool per step

    @property
    def tightened_bounds(self) -> np.ndarray:
        return self.polyhedron.bounds[np.newaxis, :] - self.reductions

    def bounds_at(self, t: int) -> np.ndarray:
        idx = np.searchsorted(self.steps, t)
        if idx >= len(self.steps) or self.steps[idx] != t:
            raise KeyError(f"no schedule entry for step {t}")
        return self.tightened_bounds[idx]


@dataclass(frozen=True)
class TightenedSchedule:
    """Reductions for every family plus the mode that produced them."""

    families: dict[str, FamilySchedule]
    mode: str                          # "box" or "budget"
    budget: float | None
    offset_convention: str

    def family(self, name: str) -> FamilySchedule:
        return self.families[name]

    def max_abs_difference(self, other: "TightenedSchedule") -> float:
        worst = 0.0
        for name, fam in self.families.items():
            o = other.families[name]
            if fam.reductions.size:
                worst = max(worst, float(np.max(np.abs(fam.reductions - o.reductions))))
        return worst

    def to_csv(self) -> str:
        lines = ["family,step,row,original_bound,reduction,tightened_bound"]
        for name, fam in self.families.items():
            poly = fam.polyhedron
            for si, t in enumerate(fam.steps):
                for ri in range(poly.n_rows):
                    r = poly.bounds[ri]
                    red = fam.reductions[si, ri]
                    lines.append(
                        f"{name},{t},{poly.labels[ri]},{r:.12g},{red:.12g},{r - red:.12g}"
                    )
        return "\n".join(lines) + "\n"


class _DeviationFamily:
    """Deviation coefficients of one constraint family's rows.

    For each step t the family's rows deviate by sum_tau theta(t, tau) w_dev(tau);
    ``lag`` holds theta as a function of the lag when that structure exists
    (time-invariant kernels), ``full`` computes it per step otherwise.
    ``kind`` fixes the lag convention: "state" rows see disturbances up to
    t-1 (lag = t-1-tau), "output" rows up to t (lag = t-tau).
    """

    def __init__(
        self,
        name: str,
        poly: PolyhedronH,
        steps: np.ndarray,
        kind: str,
        lag: np.ndarray | None,
        full=None,
    ):
        self.name = name
        self.poly = poly
        self.steps = steps
        self.kind = kind
        self.lag = lag
        self.full = full

    def theta_for_step(self, t: int) -> np.ndarray:
        """(tau_count, M, n_w) with tau = 0..t-1 (state) or 0..t (output)."""
        if self.full is not None:
            return self.full(t)
        count = t if self.kind == "state" else t + 1
        if count == 0:
            return np.zeros((0,) + self.lag.shape[1:])
        if self.kind == "state":
            idx = t - 1 - np.arange(count)
        else:
            idx = t - np.arange(count)
        return self.lag[idx]


def _phi_power_images(front: np.ndarray, phi: np.ndarray, d: np.ndarray, count: int) -> np.ndarray:
    """Stack front @ Phi^k @ D for k = 0..count-1."""
    out = np.zeros((count, front.shape[0], d.shape[1]))
    cur = front.copy()
    for k in range(count):
        out[k] = cur @ d
        cur = cur @ phi
    return out


def _build_families(
    ssm: StateSpaceModel, constraints: ConstraintFamily, gain: FeedbackGain
) -> list[_DeviationFamily]:
    T = ssm.horizon
    out_map = ssm.output
    n_w = ssm.n_w
    fams: list[_DeviationFamily] = []

    sx = constraints.x.coefficients
    fams.append(
        _DeviationFamily(
            "x", constraints.x, np.arange(1, T + 1), "state",
            _phi_power_images(sx, gain.phi, ssm.D, T) if sx.size else np.zeros((T, 0, n_w)),
        )
    )

    su = constraints.u.coefficients
    front_u = su @ gain.k if su.size else np.zeros((0, ssm.n_x))
    fams.append(
        _DeviationFamily(
            "u", constraints.u, np.arange(0, T), "state",
            _phi_power_images(front_u, gain.phi, ssm.D, T) if su.size else np.zeros((T, 0, n_w)),
        )
    )

    sdu = constraints.du.coefficients
    if sdu.size and T > 1:
        front = sdu @ gain.k
        lag_du = np.zeros((T, sdu.shape[0], n_w))
        lag_du[0] = front @ ssm.D
        if T > 1:
            lag_du[1:] = _phi_power_images(front @ (gain.phi - np.eye(ssm.n_x)), gain.phi, ssm.D, T - 1)
    else:
        lag_du = np.zeros((T, sdu.shape[0] if sdu.size else 0, n_w))
    fams.append(_DeviationFamily("du", constraints.du, np.arange(1, T), "state", lag_du))

    sy = constraints.y.coefficients
    lag_y, full_y = _output_deviation(ssm, sy, gain)
    fams.append(_DeviationFamily("y", constraints.y, np.arange(0, T), "output", lag_y, full_y))

    sdy = constraints.dy.coefficients
    if sdy.size:
        lag_dy, full_dy = _output_deviation(ssm, sdy, gain)
        if lag_dy is not None:
            diff = lag_dy.copy()
            diff[1:] -= lag_dy[:-1]
            fams.append(_DeviationFamily("dy", constraints.dy, np.arange(1, T), "output", diff))
        else:
            def full_diff(t: int, base=full_dy):
                cur = base(t)
                prev = base(t - 1)
                cur = cur.copy()
                cur[: prev.shape[0]] -= prev
                return cur

            fams.append(_DeviationFamily("dy", constraints.dy, np.arange(1, T), "output", None, full_diff))
    else:
        fams.append(
            _DeviationFamily("dy", constraints.dy, np.arange(1, T), "output", np.zeros((T, 0, n_w)))
        )
    return fams


def _output_deviation(ssm: StateSpaceModel, sy: np.ndarray, gain: FeedbackGain):
    """Deviation coefficients for rows over y; returns (lag, full) with one set."""
    T = ssm.horizon
    out = ssm.output
    n_w = ssm.n_w
    if not sy.size:
        return np.zeros((T, 0, n_w)), None
    m_rows = sy.shape[0]
    mem = out.memory_rows
    has_mem = out.temps is not None and len(mem) > 0
    ti = (not has_mem) or (out.temps.kernel_ti is not None)

    if ti:
        lag = np.zeros((T, m_rows, n_w))
        lag[0] = sy @ out.feed_w
        if has_mem:
            sel = sy[:, mem]
            for k in range(T):
                lag[k] += sel @ out.temps.kernel_ti[k] @ out.heat_w
        if not gain.is_zero:
            # control response u_dev(sigma) = K x_dev(sigma) folded through the
            # output map: direct feed at sigma = t plus kernel memory
            feed_k = sy @ out.feed_u @ gain.k          # (M, n_x)
            power = _phi_power_images(feed_k, gain.phi, ssm.D, T - 1) if T > 1 else None
            if power is not None:
                lag[1:] += power
            if has_mem:
                ker_u = np.stack(
                    [sy[:, mem] @ out.temps.kernel_ti[a] @ out.heat_u @ gain.k for a in range(T)]
                )  # (T, M, n_x)
                xpow = np.zeros((T - 1, ssm.n_x, n_w)) if T > 1 else None
                cur = ssm.D.copy()
                for j in range(T - 1):
                    xpow[j] = cur
                    cur = gain.phi @ cur
                for k in range(1, T):
                    acc = np.zeros((m_rows, n_w))
                    for a in range(k):
                        acc += ker_u[a] @ xpow[k - 1 - a]
                    lag[k] += acc
        return lag, None

    # time-varying kernel: assemble theta per step
    def full(t: int) -> np.ndarray:
        theta = np.zeros((t + 1, m_rows, n_w))
        theta[t] = sy @ out.feed_w
        sel = sy[:, mem]
        for tau in range(t + 1):
            theta[tau] += sel @ out.temps.kernel_at(t, tau) @ out.heat_w
        if not gain.is_zero:
            xpow = np.zeros((t, ssm.n_x, n_w)) if t else None
            cur = ssm.D.copy()
            for j in range(t):
                xpow[j] = cur
                cur = gain.phi @ cur
            feed_k = sy @ out.feed_u @ gain.k
            for tau in range(t):
                theta[tau] += feed_k @ xpow[t - 1 - tau]
                acc = np.zeros((m_rows, n_w))
                for sigma in range(tau + 1, t + 1):
                    acc += sel @ out.temps.kernel_at(t, sigma) @ out.heat_u @ gain.k @ xpow[sigma - 1 - tau]
                theta[tau] += acc
        return theta

    return None, full


def _box_reductions(fam: _DeviationFamily, widths: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Closed-form reductions: per row, sum over channels of |theta| W plus
    the deviation-center term."""
    steps = fam.steps
    M = fam.poly.n_rows
    rho = np.zeros((len(steps), M))
    if M == 0:
        return rho
    if fam.lag is not None:
        T_lag = fam.lag.shape[0]
        absl = np.abs(fam.lag)
        state_like = fam.kind == "state"
        first = int(steps[0])
        for k in range(T_lag):
            # steps with a contribution at this lag
            if state_like:
                lo_t = max(first, k + 1)
            else:
                lo_t = max(first, k)
            hi_t = int(steps[-1])
            if lo_t > hi_t:
                continue
            pos = lo_t - first
            tau_first = (lo_t - 1 - k) if state_like else (lo_t - k)
            count = hi_t - lo_t + 1
            wslice = widths[tau_first : tau_first + count]
            sslice = shifts[tau_first : tau_first + count]
            rho[pos : pos + count] += wslice @ absl[k].T + sslice @ fam.lag[k].T
    else:
        for si, t in enumerate(steps):
            theta = fam.theta_for_step(int(t))
            count = theta.shape[0]
            if not count:
                continue
            w = widths[:count]
            s = shifts[:count]
            rho[si] = np.einsum("kmj,kj->m", np.abs(theta), w) + np.einsum(
                "kmj,kj->m", theta, s
            )
    return rho


def _budget_reductions(
    fam: _DeviationFamily, widths: np.ndarray, shifts: np.ndarray, budget: float
) -> np.ndarray:
    """gamma per channel on the scaled coefficient sequences, plus offsets."""
    steps = fam.steps
    M = fam.poly.n_rows
    rho = np.zeros((len(steps), M))
    if M == 0:
        return rho
    for si, t in enumerate(steps):
        theta = fam.theta_for_step(int(t))    # (count, M, n_w)
        count = theta.shape[0]
        if not count:
            continue
        scaled = theta * widths[:count, np.newaxis, :]        # (count, M, n_w)
        per_channel = gamma_batch(np.moveaxis(scaled, 0, -1), budget)  # (M, n_w)
        rho[si] = per_channel.sum(axis=1)
        rho[si] += np.einsum("kmj,kj->m", theta, shifts[:count])
    return rho


def _empty_rows(poly: PolyhedronH, tightened: np.ndarray) -> tuple[bool, str]:
    """Detect emptiness of paired upper/lower box rows."""
    labels = poly.labels
    for i in range(0, poly.n_rows - 1, 2):
        if labels[i].endswith(" upper") and labels[i + 1].endswith(" lower"):
            if tightened[i] + tightened[i + 1] < -1e-12:
                return True, labels[i].rsplit(" upper", 1)[0]
    return False, ""


def tighten(
    ssm: StateSpaceModel,
    constraints: ConstraintFamily,
    tube: UncertaintyTube,
    gain: FeedbackGain,
    mode: str = "box",
    budget: float | None = None,
    offset_convention: str = "deviation",
    on_empty: str = "raise",
) -> TightenedSchedule:
    """Direct dual-norm tightening of every family over the horizon.

    mode "box" uses the per-step interval sets; mode "budget" additionally
    caps each channel's normalized 1-norm over the horizon at ``budget``.
    ``offset_convention`` selects how off-center forecast intervals enter
    ("deviation" is exact; "printed" keeps the legacy sign for comparison).
    """
    if mode == "budget":
        if budget is None:
            budget = tube.budget
        if budget is None:
            raise ValueError("budget mode requires a budget value")
        if budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
    elif mode != "box":
        raise ValueError(f"unknown mode {mode!r}")

    widths = tube.half_width
    if offset_convention == "deviation":
        shifts = tube.center_shift
    elif offset_convention == "printed":
        shifts = -tube.normalized_offset("printed") * widths
    else:
        raise ValueError(f"unknown offset convention {offset_convention!r}")

    fams = _build_families(ssm, constraints, gain)
    out: dict[str, FamilySchedule] = {}
    first_empty: tuple[str, int, str] | None = None
    for fam in fams:
        if mode == "box":
            rho = _box_reductions(fam, widths, shifts)
        else:
            rho = _budget_reductions(fam, widths, shifts, budget)
        tightened = fam.poly.bounds[np.newaxis, :] - rho
        empties = np.zeros(len(fam.steps), dtype=bool)
        for si in range(len(fam.steps)):
            bad, row = _empty_rows(fam.poly, tightened[si])
            empties[si] = bad
            if bad and first_empty is None:
                first_empty = (fam.name, int(fam.steps[si]), row)
        out[fam.name] = FamilySchedule(
            polyhedron=fam.poly, steps=fam.steps, reductions=rho, empty_steps=empties
        )
    if first_empty is not None and on_empty == "raise":
        name, step, row = first_empty
        raise TighteningInfeasibleError(
            name, step, row, "tightened interval is empty (nominal problem infeasible)"
        )
    return TightenedSchedule(
        families=out,
        mode=mode,
        budget=budget if mode == "budget" else None,
        offset_convention=offset_convention,
    )


def tighten_iterative_lp(
    ssm: StateSpaceModel,
    constraints: ConstraintFamily,
    tube: UncertaintyTube,
    gain: FeedbackGain,
    mode: str = "box",
    budget: float | None = None,
    on_empty: str = "raise",
) -> TightenedSchedule:
    """Reference tightening that solves one support LP per row and step.

    Semantically identical to :func:`tighten` with the "deviation" offset
    convention; kept as an oracle and a timing baseline.
    """
    if mode == "budget":
        if budget is None:
            budget = tube.budget
        if budget is None:
            raise ValueError("budget mode requires a budget value")
    elif mode != "box":
        raise ValueError(f"unknown mode {mode!r}")

    widths = tube.half_width
    shifts = tube.center_shift
    dev_lo, dev_hi = tube.deviation_bounds()
    n_w = tube.n_channels

    fams = _build_families(ssm, constraints, gain)
    out: dict[str, FamilySchedule] = {}
    first_empty: tuple[str, int, str] | None = None
    for fam in fams:
        M = fam.poly.n_rows
        rho = np.zeros((len(fam.steps), M))
        for si, t in enumerate(fam.steps):
            theta = fam.theta_for_step(int(t))   # (count, M, n_w)
            count = theta.shape[0]
            if count == 0 or M == 0:
                continue
            for ri in range(M):
                coeff = theta[:, ri, :]          # (count, n_w)
                if not np.any(coeff):
                    continue
                rho[si, ri] = _support_lp(
                    coeff, widths[:count], shifts[:count],
                    dev_lo[:count], dev_hi[:count], mode, budget,
                )
        tightened = fam.poly.bounds[np.newaxis, :] - rho
        empties = np.zeros(len(fam.steps), dtype=bool)
        for si in range(len(fam.steps)):
            bad, row = _empty_rows(fam.poly, tightened[si])
            empties[si] = bad
            if bad and first_empty is None:
                first_empty = (fam.name, int(fam.steps[si]), row)
        out[fam.name] = FamilySchedule(
            polyhedron=fam.poly, steps=fam.steps, reductions=rho, empty_steps=empties
        )
    if first_empty is not None and on_empty == "raise":
        name, step, row = first_empty
        raise TighteningInfeasibleError(
            name, step, row, "tightened interval is empty (nominal problem infeasible)"
        )
    return TightenedSchedule(
        families=out, mode=mode, budget=budget if mode == "budget" else None,
        offset_convention="deviation",
    )


def _support_lp(
    coeff: np.ndarray,
    widths: np.ndarray,
    shifts: np.ndarray,
    dev_lo: np.ndarray,
    dev_hi: np.ndarray,
    mode: str,
    budget: float | None,
) -> float:
    """sup of sum_tau coeff(tau) . w_dev(tau) over the tube, via the LP solver."""
    count, n_w = coeff.shape
    if mode == "box":
        # variables: the deviation sequence itself, pure bounds
        lp = LinearProgram(
            c=-coeff.ravel(),
            lower=dev_lo.ravel(),
            upper=dev_hi.ravel(),
        )
        sol = solve_lp(lp)
        if not sol.is_optimal:
            raise RuntimeError(f"support LP failed with status {sol.status}")
        return -sol.objective

    # budget: normalized deviations w with |w| <= s, per-channel sum s <= budget
    n = count * n_w
    scaled = (coeff * widths).ravel()
    g = np.zeros((2 * n + n_w, 2 * n))
    h = np.zeros(2 * n + n_w)
    g[:n, :n] = np.eye(n)
    g[:n, n:] = -np.eye(n)
    g[n : 2 * n, :n] = -np.eye(n)
    g[n : 2 * n, n:] = -np.eye(n)
    for j in range(n_w):
        g[2 * n + j, n + j :: n_w][:count] = 1.0
        h[2 * n + j] = budget
    lp = LinearProgram(
        c=np.concatenate([-scaled, np.zeros(n)]),
        g=g,
        h=h,
        lower=np.concatenate([-np.ones(n), np.zeros(n)]),
        upper=np.concatenate([np.ones(n), np.ones(n)]),
    )
    sol = solve_lp(lp, force_primal=True)
    if not sol.is_optimal:
        raise RuntimeError(f"support LP failed with status {sol.status}")
    return -sol.objective + float(np.sum(coeff * shifts))
