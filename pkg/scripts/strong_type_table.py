"""Strong type constants C_tau and weak constants at the endpoints, per p.

    python3 scripts/strong_type_table.py [--seeds 10]
"""
import argparse

from pqlab.battery import TAU_GRID, RunConfig, build_cases
from pqlab.interpolation import type_constants
from pqlab.solver import solve_system

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    cfg = RunConfig(seeds=tuple(range(args.seeds)))
    by_p: dict = {}
    for c in build_cases(cfg):
        rep = solve_system(c.S, c.M, c.f, cfg.tol)
        by_p.setdefault(c.p, []).append((rep.phi, c.f))
    print("p," + ",".join(f"C_{t:g}" for t in TAU_GRID) + ",weak_lo,weak_hi")
    for p, pairs in sorted(by_p.items()):
        tc = type_constants(pairs, TAU_GRID, cfg.lambdas)
        strong = ",".join(f"{tc.strong_constants[t]:.5g}" for t in TAU_GRID)
        print(f"{p:g},{strong},{tc.weak_constants[tc.lambda_minus]:.5g},{tc.weak_constants[tc.lambda_plus]:.5g}")
