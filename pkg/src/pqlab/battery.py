"""Seeded instance battery and the full invariant suite run over it.

Checks are either hard (identities, orthogonality, nonnegativity,
finiteness: a failure makes the run fail) or reported (implied constants,
fitted exponents).
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .interpolation import (
    SIDES,
    additivity_defect,
    comparability,
    energy,
    energy_estimate_audit,
    levelset_integral_audit,
    marcinkiewicz_split,
    pointwise_audit,
    threshold_grid,
    truncated_solutions,
    type_constants,
    weak_ratio,
)
from .io import Instance
from .instances import grid_hodge_instance, random_instance
from .measure import DataPair, Field, bracket, inner, s_power
from .monotone import MonotoneMap, PPowerMap, audit_axioms, negated_map, skew_power_map
from .rng import SplitMix64, derive_seed
from .solver import bracket_ratio, data_scale, orthogonality_defect, solve_dual, solve_system
from .subspace import SubspacePair, commutator_defect

TAU_GRID = (0.75, 0.8, 0.875, 0.95, 1.0, 1.1, 1.2, 1.35, 1.5)
EPS_GRID = (-0.2, -0.1, -0.05, -0.025, -0.0125, 0.0125, 0.025, 0.05, 0.1, 0.2)
FAMILIES = ("grid-hodge", "random-half", "random-one")
MAP_KINDS = ("p-power", "skew-power", "negated")


class BatteryError(RuntimeError):
    """The battery could not run (bad config, empty battery, axiom failure)."""


@dataclass
class RunConfig:
    tol: float = 1e-9
    tau_grid: tuple = TAU_GRID
    lambdas: tuple = (0.75, 1.5)
    eps_grid: tuple = EPS_GRID
    commutator_s: tuple = (1.5, 2.0, 3.0)
    seeds: tuple = tuple(range(10))
    ps: tuple = (1.5, 2.0, 3.0, 4.0)
    families: tuple = FAMILIES
    map_kind: str = "p-power"
    grid_shape: tuple = (4, 4)
    random_points: int = 16
    random_dim: int = 2
    thresholds: int = 5
    levelset_seeds: int = 2  # level-set audits run on the first few seeds only
    levelset_pairs: tuple = ((1.5, 1.2), (0.75, 0.875))  # (lambda, tau)
    scaling_factors: tuple = (0.5, 2.0, 10.0)
    threads: Optional[int] = None

    def __post_init__(self):
        for name in ("tau_grid", "lambdas", "eps_grid", "commutator_s", "ps", "families", "scaling_factors"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise BatteryError(f"{name} must be nonempty")
            if name not in ("families",):
                vals = tuple(sorted(float(v) for v in vals))
            setattr(self, name, vals)
        self.seeds = tuple(sorted(int(s) for s in self.seeds))
        if not self.tol > 0:
            raise BatteryError("tol must be positive")
        if min(self.tau_grid) <= 0:
            raise BatteryError("tau grid must be positive")
        if any(1 + e <= 0 for e in self.eps_grid):
            raise BatteryError("every eps must satisfy 1 + eps > 0")
        if self.map_kind not in MAP_KINDS:
            raise BatteryError(f"map_kind must be one of {MAP_KINDS}")
        for fam in self.families:
            if fam not in FAMILIES:
                raise BatteryError(f"unknown family {fam!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        extra = set(d) - set(known)
        if extra:
            raise BatteryError(f"unknown config keys: {sorted(extra)}")
        for k in ("tau_grid", "lambdas", "eps_grid", "commutator_s", "seeds", "ps", "families",
                  "grid_shape", "scaling_factors"):
            if k in known:
                known[k] = tuple(known[k])
        if "levelset_pairs" in known:
            known["levelset_pairs"] = tuple(tuple(x) for x in known["levelset_pairs"])
        return cls(**known)

    def worker_count(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        env = os.environ.get("PQLAB_THREADS")
        if env:
            return max(1, int(env))
        return max(1, min(4, os.cpu_count() or 1))


@dataclass(eq=False)
class BatteryCase:
    ident: str
    family: str
    p: float
    seed: int
    instance: Instance
    S: SubspacePair
    M: MonotoneMap
    f: DataPair

    @classmethod
    def from_instance(cls, ident: str, inst: Instance, M: MonotoneMap | None = None) -> "BatteryCase":
        S, M0, f = inst.realize()
        return cls(ident, str(inst.meta.get("family", "file")), inst.p, int(inst.meta.get("seed", 0)),
                   inst, S, M or M0, f)


def make_map(kind: str, p: float) -> MonotoneMap:
    if kind == "p-power":
        return PPowerMap(p)
    if kind == "skew-power":
        return skew_power_map(p)
    if kind == "negated":
        return negated_map()
    raise BatteryError(f"unknown map kind {kind!r}")


def family_instance(cfg: RunConfig, family: str, p: float, seed: int) -> Instance:
    s = derive_seed(seed, FAMILIES.index(family), int(round(p * 1000)))
    if family == "grid-hodge":
        r, c = cfg.grid_shape
        inst = grid_hodge_instance(r, c, p, s, random_weights=True)
    else:
        N, d = cfg.random_points, cfg.random_dim
        m = (N * d) // 2 if family == "random-half" else 1
        inst = random_instance(N, d, m, p, s)
    inst.meta["family"] = family
    inst.meta["seed"] = seed
    return inst


def build_cases(cfg: RunConfig) -> list[BatteryCase]:
    if not cfg.seeds:
        raise BatteryError("no instances: the seed list is empty")
    cases = []
    for family in cfg.families:
        for p in cfg.ps:
            for seed in cfg.seeds:
                inst = family_instance(cfg, family, p, seed)
                if cfg.map_kind == "skew-power" and inst.value_dim != 2:
                    continue
                ident = f"{family}-p{p:g}-s{seed}"
                cases.append(BatteryCase.from_instance(ident, inst, make_map(cfg.map_kind, p)))
    if not cases:
        raise BatteryError("no instances: the configured families produced none")
    return cases


# per-case record


@dataclass
class CaseResult:
    ident: str
    family: str
    p: float
    seed: int
    failures: list = field(default_factory=list)  # (check, detail)
    metrics: dict = field(default_factory=dict)  # name -> float (reported constants and residuals)
    phi: Optional[DataPair] = None
    f: Optional[DataPair] = None
    seconds: float = 0.0

    def check(self, name: str, ok: bool, detail: str = ""):
        self.metrics.setdefault("checks", {})
        self.metrics["checks"][name] = self.metrics["checks"].get(name, True) and bool(ok)
        if not ok:
            self.failures.append((name, detail))


def _rel(x: float, scale: float) -> float:
    return x / scale if scale > 0 else x


def _random_field(S: SubspacePair, seed: int) -> Field:
    sp = S.space
    return Field(sp, SplitMix64(seed).normal(sp.dim).reshape(sp.point_count, sp.value_dim))


def _structural(case: BatteryCase, res: CaseResult):
    S = case.S
    u, v = _random_field(S, derive_seed(case.seed, 11)), _random_field(S, derive_seed(case.seed, 12))
    U = np.stack([u.flat, v.flat], axis=1)
    P = S.project_flat(U, "+")
    scale = float(np.abs(U).max())
    idem = np.abs(S.project_flat(P, "+") - P).max()
    Pm = S.project_flat(U, "-")
    idem_m = np.abs(S.project_flat(Pm, "-") - Pm).max()
    comp = np.abs(P + Pm - U).max() / scale
    pu, pv = Field.from_flat(S.space, P[:, 0]), Field.from_flat(S.space, P[:, 1])
    mv = Field.from_flat(S.space, Pm[:, 1])
    nuv = math.sqrt(inner(u, u) * inner(v, v))
    orth = abs(inner(pu, mv)) / nuv
    adj = abs(inner(pu, v) - inner(u, pv)) / nuv
    r = max(idem, idem_m) / scale
    res.metrics.update(idempotence=r, complementarity=comp, projection_orthogonality=orth, self_adjointness=adj)
    res.check("projection-idempotence", r <= 1e-10, f"{r:.3e}")
    res.check("projection-complementarity", comp <= 1e-10, f"{comp:.3e}")
    res.check("projection-orthogonality", orth <= 1e-10, f"{orth:.3e}")
    res.check("projection-self-adjoint", adj <= 1e-10, f"{adj:.3e}")
    G = S.matrix * np.sqrt(S.space.flat_weights)
    ortho = np.abs(G @ G.T - np.eye(S.dim_plus)).max(initial=0.0)
    res.check("basis-orthonormal", ortho <= 1e-10, f"{ortho:.3e}")
    # s-power round trip
    p, q = case.f.p, case.f.q
    X = u.values * np.exp(SplitMix64(derive_seed(case.seed, 13)).uniform(S.space.point_count, -3, 3))[:, None]
    back = s_power(s_power(X, p - 1.0), q - 1.0)
    rt = float((np.linalg.norm(back - X, axis=1) / np.maximum(np.linalg.norm(X, axis=1), 1e-300)).max())
    res.metrics["spower_roundtrip"] = rt
    res.check("spower-roundtrip", rt <= 1e-10, f"{rt:.3e}")


def _solver_checks(case: BatteryCase, cfg: RunConfig, res: CaseResult):
    S, M, f = case.S, case.M, case.f
    rep = solve_system(S, M, f, cfg.tol)
    res.check("solve-converged", rep.converged and rep.residual_norm <= rep.tolerance,
              f"residual {rep.residual_norm:.3e} vs {rep.tolerance:.3e}")
    res.phi, res.f = rep.phi, f
    res.metrics["iterations"] = rep.iterations
    res.metrics["basic_ratio"] = rep.basic_estimate_ratio
    res.check("basic-ratio-finite", math.isfinite(rep.basic_estimate_ratio))
    alpha, beta = rep.phi.a, rep.phi.b
    na, nb = math.sqrt(inner(alpha, alpha)), math.sqrt(inner(beta, beta))
    am = float(np.linalg.norm(S.coefficients(alpha.flat, "-")))
    bp = float(np.linalg.norm(S.coefficients(beta.flat, "+")))
    res.metrics.update(alpha_membership=_rel(am, na), beta_membership=_rel(bp, nb))
    res.check("alpha-in-L+", am <= 1e-10 * na, f"{_rel(am, na):.3e}")
    res.check("beta-in-L-", bp <= 1e-10 * nb, f"{_rel(bp, nb):.3e}")
    od = orthogonality_defect(rep.phi)
    res.metrics["pq_orthogonality"] = od
    res.check("pq-orthogonality", od <= 1e-8, f"{od:.3e}")
    # uniqueness and duality
    tol_abs = rep.tolerance
    pert = solve_system(S, M, f, cfg.tol, seed_for_init=derive_seed(case.seed, 21))
    dual = solve_dual(S, M, f, cfg.tol)
    dp = (pert.phi - rep.phi).l2_norm()
    dd = (dual.phi - rep.phi).l2_norm()
    res.metrics.update(perturbed_gap=dp / tol_abs, dual_gap=dd / tol_abs)
    res.check("uniqueness", pert.converged and dp <= 100 * tol_abs, f"gap {dp:.3e}")
    res.check("primal-dual", dual.converged and dd <= 10 * tol_abs, f"gap {dd:.3e}")
    # scaling covariance
    worst = 0.0
    for lam in cfg.scaling_factors:
        mu = lam ** (f.p - 1.0)
        r = solve_system(S, M, DataPair(f.a * lam, f.b * mu, f.exps), cfg.tol)
        for got, ref in ((r.phi.a, alpha * lam), (r.phi.b, beta * mu)):
            gap = (got - ref).magnitude().max()
            worst = max(worst, gap / max(ref.magnitude().max(), 1e-300))
    res.metrics["scaling_covariance"] = worst
    res.check("scaling-covariance", worst <= 1e-8, f"{worst:.3e}")
    H = f + rep.phi
    K = comparability(H)
    res.metrics["comparability"] = K
    res.check("comparability-finite", math.isfinite(K))
    return rep


def _interpolation_checks(case: BatteryCase, cfg: RunConfig, res: CaseResult, phi: DataPair):
    S, M, f = case.S, case.M, case.f
    worst_full = worst_trunc = worst_energy_ratio = 0.0
    worst_add = 0.0
    e_min = math.inf
    scale = data_scale(f)
    g = bracket(f).values
    for t in threshold_grid(f, cfg.thresholds):
        split = marcinkiewicz_split(f, t)
        ok = (np.array_equal((split.f_upper + split.f_lower).a.values, f.a.values)
              and np.array_equal((split.f_upper + split.f_lower).b.values, f.b.values))
        up = bracket(split.f_upper).values
        lo = bracket(split.f_lower).values
        disjoint = not np.any((up > 0) & (lo > 0))
        ordered = np.all(lo <= t) and np.all((up == 0) | (g > t))
        res.check("split-exact", ok and disjoint and ordered, f"t={t:g}")
        ts = truncated_solutions(S, M, f, t, cfg.tol)
        worst_add = max(worst_add, additivity_defect(ts))
        for side in SIDES:
            Ht = ts.H_lower if side == "lower" else ts.H_upper
            pa = pointwise_audit(ts.H, Ht, f, split.part(side), side)
            er = energy(ts.H, Ht, side, t)
            e_min = min(e_min, er.minimum / pa.scale)
            res.check("energy-nonnegative", er.minimum >= -1e-10 * pa.scale, f"t={t:g} {side}: {er.minimum:.3e}")
            est = energy_estimate_audit(S, M, f, t, side, cfg.tol, solutions=ts)
            worst_full = max(worst_full, pa.max_vs_full)
            worst_trunc = max(worst_trunc, pa.max_vs_trunc)
            worst_energy_ratio = max(worst_energy_ratio, est.ratio)
    res.metrics.update(pointwise_vs_full=worst_full, pointwise_vs_trunc=worst_trunc,
                       energy_estimate=worst_energy_ratio, energy_min_rel=e_min,
                       additivity_defect=worst_add, phi_norm=phi.l2_norm())
    for name in ("pointwise_vs_full", "pointwise_vs_trunc", "energy_estimate"):
        res.check(f"{name.replace('_', '-')}-finite", math.isfinite(res.metrics[name]))
    if f.p == 2:
        res.check("linear-additivity", worst_add <= 1e-10, f"{worst_add:.3e}")
    # per-instance Chebyshev consistency, 1e-12 relative slack for rounding of equal atoms
    for lam in sorted(set(cfg.lambdas) | {1.0}):
        w = weak_ratio(phi, f, lam)
        s = bracket_ratio(phi, f, lam)
        res.check("chebyshev", w <= s * (1 + 1e-12), f"lambda={lam:g}: weak {w:.17g} > strong {s:.17g}")
    if case.seed in cfg.seeds[: cfg.levelset_seeds]:
        worst = 0.0
        for lam, tau in cfg.levelset_pairs:
            worst = max(worst, levelset_integral_audit(S, M, f, lam, tau, cfg.tol).ratio)
        res.metrics["levelset"] = worst
        res.check("levelset-finite", math.isfinite(worst))


def _commutator_checks(case: BatteryCase, cfg: RunConfig, res: CaseResult):
    if case.family != "grid-hodge":
        return
    v = case.f.a
    spread = 0.0
    for s in cfg.commutator_s:
        for sign in "+-":
            ratios = [commutator_defect(case.S, sign, v, e, s)[1] for e in cfg.eps_grid if e != 0]
            ratios = np.array(ratios)
            if np.all(ratios == 0):
                continue
            sp = float(ratios.max() / ratios.min()) if ratios.min() > 0 else math.inf
            spread = max(spread, sp)
    res.metrics["commutator_spread"] = spread
    res.check("commutator-stable", spread < 4, f"bound_ratio spread {spread:.3f}")


def run_case(case: BatteryCase, cfg: RunConfig) -> CaseResult:
    t0 = time.perf_counter()
    res = CaseResult(case.ident, case.family, case.p, case.seed)
    try:
        _structural(case, res)
        rep = _solver_checks(case, cfg, res)
        if rep.converged:
            _interpolation_checks(case, cfg, res, rep.phi)
        _commutator_checks(case, cfg, res)
    except Exception as exc:  # attribute any failure to its instance
        res.check("exception", False, f"{type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


# whole run


@dataclass
class BatteryReport:
    config: RunConfig
    results: list
    constants: dict  # group -> TypeConstants
    failures: list  # (ident, check, detail)
    summary: dict  # check -> (passed, total)
    witness: dict
    seconds: float

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = [f"battery: {len(self.results)} instances in {self.seconds:.2f} s"]
        for name, (passed, total) in sorted(self.summary.items()):
            out.append(f"  {'PASS' if passed == total else 'FAIL'} {name}: {passed}/{total}")
        for grp, tc in self.constants.items():
            strong = ", ".join(f"{t:g}:{c:.4g}" for t, c in tc.strong_constants.items())
            weak = ", ".join(f"{t:g}:{c:.4g}" for t, c in tc.weak_constants.items())
            out.append(f"  [{grp}] C_tau {{{strong}}}  weak {{{weak}}}")
        for k, v in self.witness.items():
            out.append(f"  {k}: {v}")
        for name in ("pointwise_vs_full", "pointwise_vs_trunc", "energy_estimate", "levelset", "comparability",
                     "commutator_spread", "basic_ratio"):
            vals = [r.metrics[name] for r in self.results if name in r.metrics]
            if vals:
                out.append(f"  max {name}: {max(vals):.6g}")
        if self.failures:
            ident, check, detail = self.failures[0]
            out.append(f"first failure: {ident} {check} {detail}")
        return out


def audit_maps(cfg: RunConfig, cases: Sequence[BatteryCase]):
    """Axiom audit per distinct map; raises on the first violation."""
    seen = set()
    for case in cases:
        key = (case.M.name, case.f.space.value_dim)
        if key in seen:
            continue
        seen.add(key)
        rep = audit_axioms(case.M, case.f.space, 256, 0)
        if not rep.ok:
            raise BatteryError(f"axiom audit failed for map {case.M.name}: monotonicity {rep.monotonicity:.3g}, "
                               f"lipschitz {rep.lipschitz:.3g}, homogeneity {rep.homogeneity_residual:.3g}")
        if case.M.p != case.f.p:
            raise BatteryError(f"map {case.M.name} has degree p={case.M.p:g} but data has p={case.f.p:g}")


def run_battery(cfg: RunConfig | None = None, cases: Sequence[BatteryCase] | None = None,
                progress: Callable[[CaseResult], None] | None = None) -> BatteryReport:
    cfg = cfg or RunConfig()
    t0 = time.perf_counter()
    cases = list(cases) if cases is not None else build_cases(cfg)
    if not cases:
        raise BatteryError("no instances")
    audit_maps(cfg, cases)
    with ThreadPoolExecutor(max_workers=cfg.worker_count()) as pool:
        results = list(pool.map(lambda c: run_case(c, cfg), cases))
    results.sort(key=lambda r: r.ident)
    if progress:
        for r in results:
            progress(r)
    failures = [(r.ident, c, d) for r in results for c, d in r.failures]
    summary: dict = {}
    for r in results:
        for name, ok in r.metrics.get("checks", {}).items():
            p, t = summary.get(name, (0, 0))
            summary[name] = (p + int(ok), t + 1)
    constants = {}
    groups: dict = {}
    for r in results:
        if r.phi is not None:
            groups.setdefault(f"p={r.p:g}", []).append(r)
    solved = [r for r in results if r.phi is not None]
    if solved:
        groups["all"] = solved
    for grp, rs in groups.items():
        tc = type_constants([(r.phi, r.f) for r in rs], cfg.tau_grid, cfg.lambdas)
        tc.strong_argmax = {t: rs[i].ident for t, i in tc.strong_argmax.items()}
        tc.weak_argmax = {t: rs[i].ident for t, i in tc.weak_argmax.items()}
        constants[grp] = tc
        fin = tc.all_finite()
        summary_key = "type-constants-finite"
        p_, t_ = summary.get(summary_key, (0, 0))
        summary[summary_key] = (p_ + int(fin), t_ + 1)
        if not fin:
            failures.append((grp, summary_key, "non-finite constant"))
        basic = max(r.metrics["basic_ratio"] for r in rs)
        if 1.0 in tc.strong_constants:
            same = tc.strong_constants[1.0] == basic
            p_, t_ = summary.get("C1-equals-basic", (0, 0))
            summary["C1-equals-basic"] = (p_ + int(same), t_ + 1)
            if not same:
                failures.append((grp, "C1-equals-basic", f"{tc.strong_constants[1.0]!r} != {basic!r}"))
        for lam, w in tc.weak_constants.items():
            if lam in tc.strong_constants:
                ok = w <= tc.strong_constants[lam] * (1 + 1e-12)
                p_, t_ = summary.get("weak-le-strong", (0, 0))
                summary["weak-le-strong"] = (p_ + int(ok), t_ + 1)
                if not ok:
                    failures.append((grp, "weak-le-strong", f"lambda={lam:g}"))
        p_, t_ = summary.get("tau-refinement", (0, 0))
        summary["tau-refinement"] = (p_ + int(tc.refinement_ok), t_ + 1)
        if not tc.refinement_ok:
            failures.append((grp, "tau-refinement", "C_tau jumps between grid points"))
    witness = {}
    p4 = [r for r in results if r.p == 4 and "additivity_defect" in r.metrics]
    if p4:
        best = max(p4, key=lambda r: r.metrics["additivity_defect"] / max(r.metrics["phi_norm"], 1e-300))
        rel = best.metrics["additivity_defect"] / max(best.metrics["phi_norm"], 1e-300)
        witness["nonlinearity witness (p=4)"] = f"{best.ident} relative defect {rel:.4g}"
        ok = rel > 1e-3
        summary["nonlinearity-witness"] = (int(ok), 1)
        if not ok:
            failures.append((best.ident, "nonlinearity-witness", f"{rel:.3e}"))
    return BatteryReport(cfg, results, constants, failures, summary, witness, time.perf_counter() - t0)
