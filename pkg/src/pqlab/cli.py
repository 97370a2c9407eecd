"""Command line front end: ``pqlab <command> ...``.

Exit codes: 0 success, 1 a solve or check failed, 2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .battery import EPS_GRID, BatteryCase, BatteryError, RunConfig, build_cases, run_battery
from .instances import grid_hodge_instance, random_instance
from .interpolation import (
    SIDES,
    additivity_defect,
    energy,
    energy_estimate_audit,
    marcinkiewicz_split,
    pointwise_audit,
    threshold_grid,
    truncated_solutions,
    type_constants,
)
from .io import InstanceFormatError, dumps_instance, read_instance, write_csv, write_instance, write_solution
from .measure import DomainError
from .monotone import ConvergenceError
from .solver import DEFAULT_TOL, lp_projection_certified, solve_dual, solve_system
from .subspace import commutator_defect

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class UsageError(ValueError):
    pass


def parse_grid(text: str, name: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise UsageError(f"{name} must be nonempty")
    return tuple(sorted(vals))


def _emit(rows, out, columns):
    if out:
        write_csv(rows, out, columns)
    else:
        write_csv(rows, sys.stdout, columns)


def _load_config(args) -> RunConfig:
    d = {}
    if getattr(args, "config", None):
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(d, dict):
            raise UsageError("config must be a JSON object")
    if args.tol is not None:
        d["tol"] = args.tol
    if getattr(args, "tau_grid", None):
        d["tau_grid"] = parse_grid(args.tau_grid, "--tau-grid")
    if getattr(args, "lambdas", None):
        d["lambdas"] = parse_grid(args.lambdas, "--lambda")
    if getattr(args, "eps_grid", None):
        d["eps_grid"] = parse_grid(args.eps_grid, "--eps-grid")
    if getattr(args, "seeds", None) is not None:
        d["seeds"] = tuple(int(x) for x in args.seeds.split(",") if x.strip())
    if getattr(args, "map_kind", None):
        d["map_kind"] = args.map_kind
    if getattr(args, "threads", None):
        d["threads"] = args.threads
    return RunConfig.from_dict(d)


# commands


def cmd_gen(args) -> int:
    if args.family == "grid-hodge":
        inst = grid_hodge_instance(args.rows, args.cols, args.p, args.seed, args.random_weights, args.zero)
    else:
        inst = random_instance(args.N, args.d, args.m, args.p, args.seed, not args.unit_weights, args.zero)
    if args.out:
        write_instance(inst, args.out)
    else:
        sys.stdout.write(dumps_instance(inst))
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    S, M, f = inst.realize()
    tol = args.tol if args.tol is not None else DEFAULT_TOL
    solver = solve_dual if args.dual else solve_system
    rep = solver(S, M, f, tol, seed_for_init=args.seed)
    if args.out:
        write_solution(rep, tol, args.out)
    print(f"converged={rep.converged} iterations={rep.iterations} residual={rep.residual_norm:.3e} "
          f"tolerance={rep.tolerance:.3e} basic_estimate_ratio={rep.basic_estimate_ratio:.6g} method={rep.method}")
    if not args.out:
        print("alpha=" + " ".join(f"{x:.17g}" for x in rep.alpha.flat))
        print("beta=" + " ".join(f"{x:.17g}" for x in rep.beta.flat))
    return EXIT_OK if rep.converged else EXIT_FAIL


def cmd_project(args) -> int:
    """L^p projection of the instance field a onto L+."""
    inst = read_instance(args.instance)
    S, _, f = inst.realize()
    tol = args.tol if args.tol is not None else DEFAULT_TOL
    alpha, cert, bound, conv = lp_projection_certified(S, f.a, inst.p, tol)
    rows = [{"index": i, "f": x, "alpha": y} for i, (x, y) in enumerate(zip(f.a.flat, alpha.flat))]
    _emit(rows, args.out, ["index", "f", "alpha"])
    ok = conv and cert <= bound
    print(f"certificate={cert:.3e} bound={bound:.3e} ok={ok}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_decompose(args) -> int:
    inst = read_instance(args.instance)
    S, M, f = inst.realize()
    tol = args.tol if args.tol is not None else DEFAULT_TOL
    ts_grid = parse_grid(args.thresholds, "--thresholds") if args.thresholds else threshold_grid(f, args.count)
    rows = []
    for t in ts_grid:
        split = marcinkiewicz_split(f, t)
        sols = truncated_solutions(S, M, f, t, tol)
        row = {"t": t, "additivity_defect": additivity_defect(sols), "phi_norm": (sols.H - f).l2_norm()}
        for side in SIDES:
            Ht = sols.H_lower if side == "lower" else sols.H_upper
            er = energy(sols.H, Ht, side, t)
            pa = pointwise_audit(sols.H, Ht, f, split.part(side), side)
            est = energy_estimate_audit(S, M, f, t, side, tol, solutions=sols)
            row.update({f"energy_{side}": er.total, f"energy_min_{side}": er.minimum,
                        f"pointwise_full_{side}": pa.max_vs_full, f"pointwise_trunc_{side}": pa.max_vs_trunc,
                        f"energy_estimate_{side}": est.ratio})
        rows.append(row)
    _emit(rows, args.out, list(rows[0].keys()))
    return EXIT_OK


def _instance_cases(directory: str) -> list[BatteryCase]:
    paths = sorted(Path(directory).glob("*.json"))
    return [BatteryCase.from_instance(p.stem, read_instance(p)) for p in paths]


def cmd_interpolate(args) -> int:
    cfg = _load_config(args)
    if args.instances:
        cases = _instance_cases(args.instances)
        if not cases:
            raise BatteryError(f"no instances in {args.instances}")
    else:
        cases = build_cases(cfg)
    pairs, ids = [], []
    for c in cases:
        rep = solve_system(c.S, c.M, c.f, cfg.tol)
        if not rep.converged:
            raise ConvergenceError(f"instance {c.ident}: solve did not converge")
        pairs.append((rep.phi, c.f))
        ids.append(c.ident)
    tc = type_constants(pairs, cfg.tau_grid, cfg.lambdas)
    rows = [{"kind": "strong", "exponent": t, "constant": c, "instance": ids[tc.strong_argmax[t]]}
            for t, c in tc.strong_constants.items()]
    rows += [{"kind": "weak", "exponent": lam, "constant": tc.weak_constants[lam], "instance": ids[tc.weak_argmax[lam]]}
             for lam in (tc.lambda_minus, tc.lambda_plus)]
    _emit(rows, args.out, ["kind", "exponent", "constant", "instance"])
    return EXIT_OK


def cmd_commutator(args) -> int:
    inst = read_instance(args.instance)
    S, _, f = inst.realize()
    eps = parse_grid(args.eps_grid, "--eps-grid") if args.eps_grid else EPS_GRID
    if any(1 + e <= 0 for e in eps):
        raise UsageError("every eps must satisfy 1 + eps > 0")
    rows = []
    for e in eps:
        d, r = commutator_defect(S, args.sign, f.a, e, args.s)
        rows.append({"eps": e, "defect": d, "bound_ratio": r})
    _emit(rows, args.out, ["eps", "defect", "bound_ratio"])
    return EXIT_OK


def cmd_battery(args) -> int:
    cfg = _load_config(args)
    rep = run_battery(cfg)
    for line in rep.lines():
        print(line)
    if args.out:
        rows = [{"instance": r.ident, "failures": len(r.failures),
                 **{k: v for k, v in r.metrics.items() if k != "checks"}} for r in rep.results]
        cols = sorted({k for row in rows for k in row} - {"instance"})
        write_csv(rows, args.out, ["instance"] + cols)
    return EXIT_OK if rep.ok else EXIT_FAIL


# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pqlab", description="Nonlinear L^p projections and interpolation audits")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--tol", type=float, default=None, help="relative residual tolerance")
        if seed:
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output path (stdout when omitted)")

    g = sub.add_parser("gen", help="write a seeded instance file")
    g.add_argument("family", choices=["grid-hodge", "random"])
    g.add_argument("--rows", type=int, default=2)
    g.add_argument("--cols", type=int, default=2)
    g.add_argument("--N", type=int, default=8)
    g.add_argument("--d", type=int, default=1)
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--p", type=float, default=2.0)
    g.add_argument("--random-weights", action="store_true", help="grid edges get seeded weights")
    g.add_argument("--unit-weights", action="store_true", help="random family uses unit weights")
    g.add_argument("--zero", action="store_true", help="zero data pair")
    common(g)
    g.set_defaults(func=cmd_gen, seed=0)

    s = sub.add_parser("solve", help="solve the system for an instance")
    s.add_argument("instance")
    s.add_argument("--dual", action="store_true", help="solve over L- with the inverse map")
    common(s)
    s.set_defaults(func=cmd_solve)

    p = sub.add_parser("project", help="L^p projection of the field a onto L+")
    p.add_argument("instance")
    common(p, seed=False)
    p.set_defaults(func=cmd_project)

    d = sub.add_parser("decompose", help="level-set split audits over thresholds")
    d.add_argument("instance")
    d.add_argument("--thresholds", default=None, help="comma-separated thresholds")
    d.add_argument("--count", type=int, default=5, help="thresholds drawn from the breakpoints")
    common(d, seed=False)
    d.set_defaults(func=cmd_decompose)

    for name, fn, helptext in (("interpolate", cmd_interpolate, "weak and strong type constants"),
                               ("battery", cmd_battery, "full invariant suite")):
        b = sub.add_parser(name, help=helptext)
        if name == "interpolate":
            b.add_argument("instances", nargs="?", default=None, help="directory of instance files")
        b.add_argument("--config", default=None, help="JSON run config")
        b.add_argument("--tau-grid", default=None)
        b.add_argument("--lambda", dest="lambdas", default=None, help="endpoint exponents, e.g. 0.75,1.5")
        b.add_argument("--eps-grid", default=None)
        b.add_argument("--seeds", default=None, help="comma-separated battery seeds")
        b.add_argument("--map-kind", default=None, choices=["p-power", "skew-power", "negated"])
        b.add_argument("--threads", type=int, default=None)
        common(b)
        b.set_defaults(func=fn)

    c = sub.add_parser("commutator", help="power commutator sweep over eps")
    c.add_argument("instance")
    c.add_argument("--s", type=float, default=2.0, help="norm exponent")
    c.add_argument("--sign", choices=["+", "-"], default="+")
    c.add_argument("--eps-grid", default=None)
    common(c, seed=False)
    c.set_defaults(func=cmd_commutator)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InstanceFormatError, UsageError, DomainError) as exc:
        print(f"pqlab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BatteryError, ConvergenceError) as exc:
        print(f"pqlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
