"""Command-line front end.

Subcommands: reference (emit the bundled config), tighten, dispatch,
validate, compare.  All numeric outputs are pure functions of the config,
flags, and seed; wall-clock timings are confined to the comparison report.
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import yaml

from .compile import compile_constraints, compile_state_space, compile_uncertainty_tube
from .config_io import ConfigError, ModelValidationError, load_system
from .dispatch import (
    CostModel,
    Policy,
    build_nominal_problem,
    deterministic_schedule,
    solve_dispatch,
)
from .model import SystemModel
from .reference import build_reference_system, reference_document
from .tighten import TighteningInfeasibleError, choose_gain, tighten, tighten_iterative_lp
from .validation import compare_methods, evaluate, sample_disturbances

__all__ = ["main", "run"]

OUT_DIR_ENV = "CHPDISPATCH_OUT"

# physical unit per manifest kind, for CSV headers
KIND_UNITS = {
    "battery_energy": "fraction",
    "tank_level": "fraction",
    "chp_p": "pu",
    "chp_q": "pu",
    "grid_p": "pu",
    "grid_q": "pu",
    "hp_p": "pu",
    "battery_power": "pu",
    "tank_flow": "MW",
    "branch_flow": "pu",
    "voltage": "pu",
    "supply_temp": "degC",
    "return_temp": "degC",
    "pv_power": "pu",
    "electric_load_p": "pu",
    "electric_load_q": "pu",
    "heat_load": "MW",
}


def unit_of(kind_or_label: str) -> str:
    key = kind_or_label.split("[", 1)[0]
    if key.endswith("_ramp"):
        key = key[: -len("_ramp")]
    return KIND_UNITS.get(key, "mixed")


class DomainError(RuntimeError):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="chpdispatch",
        description="Robust dispatch for combined heat-and-power systems",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser, with_mode: bool = True) -> None:
        sp.add_argument("--config", help="system config file (default: bundled reference)")
        sp.add_argument("--horizon", type=int, help="override horizon steps")
        sp.add_argument("--dt", type=float, help="override step length in seconds")
        sp.add_argument(
            "--out",
            default=os.environ.get(OUT_DIR_ENV, "."),
            help=f"output directory (default: ${OUT_DIR_ENV} or cwd)",
        )
        if with_mode:
            sp.add_argument("--mode", choices=["box", "budget"], default="box")
            sp.add_argument("--gamma", type=float, help="budget (required for mode=budget)")

    sp = sub.add_parser("reference", help="write the bundled reference config")
    sp.add_argument("--horizon", type=int, default=288)
    sp.add_argument("--dt", type=float, default=300.0)
    sp.add_argument("--out", default=os.environ.get(OUT_DIR_ENV, "."))

    sp = sub.add_parser("tighten", help="compute a tightened-constraint schedule")
    common(sp)
    sp.add_argument("--iterative", action="store_true", help="use the LP-iteration baseline")

    sp = sub.add_parser("dispatch", help="solve the nominal dispatch problem")
    common(sp)
    sp.add_argument("--deterministic", action="store_true", help="disable tightening (DO)")
    sp.add_argument("--plot-data", action="store_true", help="emit per-quantity bound CSVs")

    sp = sub.add_parser("validate", help="Monte Carlo validation of a policy")
    common(sp)
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--deterministic", action="store_true", help="validate the DO policy")
    sp.add_argument(
        "--sampling", choices=["uniform", "budget", "vertex"], default="uniform"
    )
    sp.add_argument("--traces", action="store_true", help="emit per-sample traces CSV")
    sp.add_argument(
        "--plot-data", action="store_true",
        help="emit state-envelope CSVs (nominal, bounds, sample min/max)",
    )

    sp = sub.add_parser("compare", help="compare methods on one scenario batch")
    common(sp, with_mode=False)
    sp.add_argument(
        "--methods",
        default="do,erd-box",
        help="comma list: do, erd-box, erd-budget:G, erd-iterative-box",
    )
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    return p


def _load_model(args) -> SystemModel:
    if args.config:
        model = load_system(args.config)
        if args.horizon or args.dt:
            raise DomainError(
                "horizon/dt overrides apply to the bundled reference only; "
                "edit the config file instead"
            )
        return model
    horizon = args.horizon or 288
    dt = args.dt or 300.0
    return build_reference_system(horizon, dt)


def _prepare(args, mode: str | None, gamma: float | None):
    model = _load_model(args)
    ssm = compile_state_space(model)
    constraints = compile_constraints(model, ssm)
    tube = compile_uncertainty_tube(model, budget=gamma)
    gain = choose_gain(ssm)
    costs = CostModel.from_model(model)
    return model, ssm, constraints, tube, gain, costs


def _schedule(args, ssm, constraints, tube, gain):
    mode = getattr(args, "mode", "box")
    gamma = getattr(args, "gamma", None)
    if mode == "budget" and gamma is None:
        raise DomainError("--gamma is required when --mode budget")
    if getattr(args, "deterministic", False):
        return deterministic_schedule(ssm, constraints, tube, gain), "do"
    if getattr(args, "iterative", False):
        return (
            tighten_iterative_lp(ssm, constraints, tube, gain, mode=mode, budget=gamma),
            f"iterative-{mode}",
        )
    return tighten(ssm, constraints, tube, gain, mode=mode, budget=gamma), mode


def _ensure_out(args) -> str:
    out = args.out
    os.makedirs(out, exist_ok=True)
    return out


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def run(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch_command(args)
    except (ConfigError, ModelValidationError, TighteningInfeasibleError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch_command(args) -> int:
    out = _ensure_out(args)

    if args.command == "reference":
        doc = reference_document(args.horizon, args.dt)
        path = os.path.join(out, "reference.yaml")
        _write(path, yaml.safe_dump(doc, sort_keys=False))
        print(f"wrote {path}")
        return 0

    gamma = getattr(args, "gamma", None)
    model, ssm, constraints, tube, gain, costs = _prepare(args, getattr(args, "mode", None), gamma)

    if args.command == "tighten":
        schedule, label = _schedule(args, ssm, constraints, tube, gain)
        path = os.path.join(out, "schedule.csv")
        _write(path, _schedule_csv(schedule))
        print(f"wrote {path} ({label})")
        return 0

    if args.command == "dispatch":
        import time

        schedule, label = _schedule(args, ssm, constraints, tube, gain)
        est_rows = (constraints.y.n_rows + 14) * ssm.horizon
        est_cols = ssm.horizon * (ssm.n_u + ssm.n_x + 2) + ssm.n_x
        if est_rows * est_cols * 8 > 3e8:
            print(
                f"warning: dense dispatch LP of roughly {est_rows} x {est_cols};"
                " consider a coarser horizon (e.g. --horizon 24 --dt 3600)",
                file=sys.stderr,
            )
        t0 = time.perf_counter()
        problem = build_nominal_problem(ssm, schedule, costs, tube.w_center)
        t_build = time.perf_counter() - t0
        t0 = time.perf_counter()
        sol = solve_dispatch(ssm, schedule, costs, tube.w_center, problem=problem)
        t_solve = time.perf_counter() - t0
        if not sol.is_optimal:
            raise DomainError(
                f"dispatch {sol.status}; blocking rows: {', '.join(sol.blocking_rows) or 'n/a'}"
            )
        _write(os.path.join(out, "dispatch.csv"), _trajectory_csv(ssm, sol))
        summary = {
            "status": sol.status,
            "objective_usd": sol.objective,
            "mode": label,
            "gamma": gamma,
            "horizon": ssm.horizon,
            "lp_variables": problem.lp.n_vars,
            "lp_inequalities": problem.lp.n_ineq,
            "lp_equalities": problem.lp.n_eq,
            "kkt_gap": sol.kkt.gap,
        }
        _write(os.path.join(out, "summary.json"), _json_text(summary))
        # wall-clock diagnostics stay out of the deterministic summary
        _write(
            os.path.join(out, "timings.json"),
            _json_text({"build_seconds": t_build, "solve_seconds": t_solve}),
        )
        if getattr(args, "plot_data", False):
            _plot_data(out, ssm, sol, schedule)
        print(f"objective {sol.objective:.6f}, status {sol.status}")
        return 0

    if args.command == "validate":
        schedule, label = _schedule(args, ssm, constraints, tube, gain)
        sol = solve_dispatch(ssm, schedule, costs, tube.w_center)
        if not sol.is_optimal:
            raise DomainError(
                f"dispatch {sol.status}; blocking rows: {', '.join(sol.blocking_rows) or 'n/a'}"
            )
        policy = Policy(solution=sol, gain=gain)
        batch = sample_disturbances(
            tube, args.samples, args.seed, mode=args.sampling, budget=gamma
        )
        metrics, traces = evaluate(
            policy, ssm, constraints, costs, batch, return_traces=True
        )
        payload = metrics.to_dict()
        payload.update({"mode": label, "gamma": gamma, "seed": args.seed, "sampling": args.sampling})
        _write(os.path.join(out, "metrics.json"), _json_text(payload))
        _write(os.path.join(out, "metrics.csv"), _metrics_csv(payload))
        if args.traces:
            lines = ["sample,violated[bool],realized_cost[$]"]
            for i in range(batch.count):
                lines.append(
                    f"{i},{int(traces['violated'][i])},{traces['realized_cost'][i]:.12g}"
                )
            _write(os.path.join(out, "samples.csv"), "\n".join(lines) + "\n")
        if getattr(args, "plot_data", False):
            _envelope_data(out, ssm, Policy(solution=sol, gain=gain), schedule, batch)
        print(
            f"violation rate {metrics.violation_rate:.4%}, "
            f"J_exp {metrics.j_expected:.4f} (J_nom {metrics.j_nominal:.4f})"
        )
        return 0

    if args.command == "compare":
        methods = [m for m in args.methods.split(",") if m]
        report = compare_methods(
            ssm, constraints, tube, gain, costs, methods,
            sample_count=args.samples, seed=args.seed,
        )
        _write(os.path.join(out, "comparison.json"), _json_text(report.to_dict()))
        _write(os.path.join(out, "comparison_timings.json"), _json_text(report.timings_dict()))
        _write(os.path.join(out, "comparison.txt"), report.to_text())
        print(report.to_text())
        return 0

    raise DomainError(f"unhandled command {args.command}")


def _schedule_csv(schedule) -> str:
    lines = ["family,step,row,unit,original_bound,reduction,tightened_bound"]
    for name, fam in schedule.families.items():
        poly = fam.polyhedron
        for si, t in enumerate(fam.steps):
            for ri in range(poly.n_rows):
                r = poly.bounds[ri]
                red = fam.reductions[si, ri]
                label = poly.labels[ri]
                lines.append(
                    f"{name},{t},{label},{unit_of(label)},{r:.12g},{red:.12g},{r - red:.12g}"
                )
    return "\n".join(lines) + "\n"


def _trajectory_csv(ssm, sol) -> str:
    man = ssm.manifest
    cols = (
        [f"x:{k}:{n}[{unit_of(k)}]" for k, n in man.x]
        + [f"u:{k}:{n}[{unit_of(k)}]" for k, n in man.u]
        + [f"y:{k}:{n}[{unit_of(k)}]" for k, n in man.y]
    )
    lines = ["step," + ",".join(cols)]
    T = ssm.horizon
    for t in range(T):
        vals = (
            [f"{v:.12g}" for v in sol.x_seq[t]]
            + [f"{v:.12g}" for v in sol.u_seq[t]]
            + [f"{v:.12g}" for v in sol.y_seq[t]]
        )
        lines.append(f"{t}," + ",".join(vals))
    lines.append(
        f"{T},"
        + ",".join(
            [f"{v:.12g}" for v in sol.x_seq[T]]
            + [""] * (len(man.u) + len(man.y))
        )
    )
    return "\n".join(lines) + "\n"


def _metrics_csv(payload: dict) -> str:
    keys = ["violation_rate", "j_nominal", "j_expected", "j_max", "j_min", "sample_count"]
    units = ["fraction", "$", "$", "$", "$", "count"]
    header = ",".join(f"{k}[{u}]" for k, u in zip(keys, units))
    row = ",".join(f"{payload[k]:.12g}" if isinstance(payload[k], float) else str(payload[k]) for k in keys)
    return header + "\n" + row + "\n"


def _plot_data(out: str, ssm, sol, schedule) -> None:
    """Per-quantity CSVs: nominal line plus original and tightened bounds."""
    man = ssm.manifest

    def family_rows(fam_name: str, labels_wanted: str):
        fam = schedule.family(fam_name)
        poly = fam.polyhedron
        rows = {}
        for ri, label in enumerate(poly.labels):
            base = label.rsplit(" ", 1)[0]
            side = label.rsplit(" ", 1)[1]
            if base.startswith(labels_wanted):
                rows.setdefault(base, {})[side] = ri
        return fam, rows

    # states: battery energy / tank level; controls: chp and grid active power
    targets = [
        ("x", "battery_energy", "x"),
        ("x", "tank_level", "x"),
        ("u", "chp_p", "u"),
        ("u", "grid_p", "u"),
    ]
    for fam_name, kind, vec in targets:
        fam, rows = family_rows(fam_name, kind)
        for base, sides in rows.items():
            if "upper" not in sides or "lower" not in sides:
                continue
            ri_up, ri_lo = sides["upper"], sides["lower"]
            poly = fam.polyhedron
            coeff = poly.coefficients[ri_up]
            idx = int(np.argmax(np.abs(coeff)))
            series = sol.x_seq[:, idx] if vec == "x" else sol.u_seq[:, idx]
            unit = unit_of(base)
            lines = [
                f"step,nominal[{unit}],orig_lower[{unit}],orig_upper[{unit}],"
                f"tight_lower[{unit}],tight_upper[{unit}]"
            ]
            for si, t in enumerate(fam.steps):
                t = int(t)
                nom = series[t]
                orig_up = poly.bounds[ri_up]
                orig_lo = -poly.bounds[ri_lo]
                ti_up = fam.tightened_bounds[si, ri_up]
                ti_lo = -fam.tightened_bounds[si, ri_lo]
                lines.append(
                    f"{t},{nom:.12g},{orig_lo:.12g},{orig_up:.12g},{ti_lo:.12g},{ti_up:.12g}"
                )
            name = base.replace("[", "_").replace("]", "").replace(" ", "_")
            _write(os.path.join(out, f"bounds_{name}.csv"), "\n".join(lines) + "\n")


def _envelope_data(out: str, ssm, policy, schedule, batch) -> None:
    """Fig-style per-state CSV: nominal, original/tightened bounds, envelope."""
    from .validation import state_envelopes

    env_min, env_max = state_envelopes(policy, ssm, batch)
    sol = policy.solution
    fam = schedule.family("x")
    poly = fam.polyhedron
    man = ssm.manifest
    for idx, (kind, name) in enumerate(man.x):
        sides = {}
        for ri, label in enumerate(poly.labels):
            if label.startswith(f"{kind}[{name}]"):
                sides[label.rsplit(" ", 1)[1]] = ri
        if "upper" not in sides or "lower" not in sides:
            continue
        unit = unit_of(kind)
        lines = [
            f"step,nominal[{unit}],orig_lower[{unit}],orig_upper[{unit}],"
            f"tight_lower[{unit}],tight_upper[{unit}],env_min[{unit}],env_max[{unit}]"
        ]
        for si, t in enumerate(fam.steps):
            t = int(t)
            lines.append(
                f"{t},{sol.x_seq[t, idx]:.12g},"
                f"{-poly.bounds[sides['lower']]:.12g},{poly.bounds[sides['upper']]:.12g},"
                f"{-fam.tightened_bounds[si, sides['lower']]:.12g},"
                f"{fam.tightened_bounds[si, sides['upper']]:.12g},"
                f"{env_min[t, idx]:.12g},{env_max[t, idx]:.12g}"
            )
        safe = f"{kind}_{name}".replace("[", "_").replace("]", "")
        _write(os.path.join(out, f"envelope_{safe}.csv"), "\n".join(lines) + "\n")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
