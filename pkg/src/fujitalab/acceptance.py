"""End-to-end acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult` with the measured quantities in
``details``; nothing here is tuned to make a check pass.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cantor as cantor_mod
from . import covering as cov
from . import solver as S
from .geometry import (comparison_report, exp_chart, fujita_exponent, make_manifold, origin,
                       threshold_radii)
from .heat_kernel import (HeatKernel, fit_gaussian_constants, gaussian_bounds_check, harnack_bound,
                          harnack_sweep, kernel_mass, semigroup_defect)
from .maximal import fit_stability, ratio_curve
from .measures import (critical_profile, dirac, growth_classify, lumu_bracket_check,
                       singular_profile, uniform_density)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime: float
    budget: float
    details: dict = field(default_factory=dict)

    @property
    def within_budget(self) -> bool:
        return self.runtime < self.budget

    @property
    def ok(self) -> bool:
        return bool(self.passed and self.within_budget)

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        extra = "" if self.within_budget else f" (over budget {self.budget:g} s)"
        return f"[{tag}] criterion {self.number:2d} {self.name}: {self.runtime:.2f} s{extra}"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed, "ok": self.ok,
                "runtime_s": self.runtime, "budget_s": self.budget, "details": self.details}


def _timed(number: int, name: str, budget: float, fn: Callable[[], tuple[bool, dict]]) -> CriterionResult:
    t0 = time.perf_counter()
    passed, details = fn()
    return CriterionResult(number, name, bool(passed), time.perf_counter() - t0, budget, details)


# ------------------------------------------------------------------ 1


def _exponents() -> tuple[bool, dict]:
    pf = {N: fujita_exponent(N) for N in (1, 2, 3)}
    pf_ok = all(pf[N] == (N + 2) / N for N in pf)
    r_s2 = threshold_radii(make_manifold("sphere", 2, 1.0)).rho_inf
    r_eu = [threshold_radii(make_manifold("euclidean", N)).rho_inf for N in (1, 2, 3)]
    ok = pf_ok and abs(r_s2 - math.pi / 4) <= 1e-15 and all(math.isinf(r) for r in r_eu)
    return ok, {"p_F": pf, "rho_inf_S2": r_s2, "rho_inf_euclidean": r_eu}


def criterion_1() -> CriterionResult:
    return _timed(1, "Fujita exponent and threshold radii", 1.0, _exponents)


# ------------------------------------------------------------------ 2

COMPARISON_MODELS = [("sphere", 2), ("sphere", 3), ("hyperbolic", 2), ("hyperbolic", 3)]


def _comparison(seed: int = 0) -> tuple[bool, dict]:
    out, ok = {}, True
    for kind, N in COMPARISON_MODELS:
        M = make_manifold(kind, N, 1.0)
        radii = np.linspace(0.0, math.pi / (4 * M.sqrt_k), 102)[1:-1]
        rep = comparison_report(M, radii, seed=seed)
        fails = rep.failures()
        out[M.label] = {"rows": len(rep.rows), "failures": len(fails),
                        "min_slack": min(r.slack for r in rep.rows)}
        ok &= rep.all_pass
    return ok, out


def criterion_2() -> CriterionResult:
    return _timed(2, "comparison suite on curved models", 10.0, _comparison)


# ------------------------------------------------------------------ 3

KERNEL_MODELS = [("euclidean", 1, 0.0), ("euclidean", 2, 0.0), ("circle", 1, 1.0),
                 ("sphere", 2, 1.0), ("hyperbolic", 2, 1.0), ("hyperbolic", 3, 1.0)]
KERNEL_TIMES = (0.01, 0.1, 1.0)


def _kernel_suite(seed: int = 0) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    rows = {}
    mass_ok = semi_ok = lower_ok = True
    harnack = {}
    T_h = 2.0
    for kind, N, k in KERNEL_MODELS:
        M = make_manifold(kind, N, k)
        E = HeatKernel(M)
        x = origin(M)
        _, c_low = fit_gaussian_constants(E, T_h)
        mass_err, semi, lows = 0.0, 0.0, []
        for t in KERNEL_TIMES:
            mass_err = max(mass_err, abs(kernel_mass(E, t) - 1.0))
            dmax = min(2.0 * math.sqrt(t), 0.9 * M.injectivity_radius)
            for d in (0.0, 0.5 * dmax, dmax):
                v = np.zeros(N)
                v[0] = d
                y = exp_chart(M, v)
                for s_frac in (0.5, 0.25):
                    semi = max(semi, semigroup_defect(E, x, y, s_frac * t, (1 - s_frac) * t))
            # lower Gaussian bound at random separations (not the calibration grid)
            dl = rng.uniform(0.0, 0.999 * min(M.injectivity_radius, 6 * math.sqrt(T_h)), 8)
            for d in dl:
                v = np.zeros(N)
                v[0] = d
                chk = gaussian_bounds_check(E, x, exp_chart(M, v), t, T_h, math.inf, c_low)
                lows.append(chk["lower_ok"])
        rows[M.label] = {"max_mass_error": mass_err, "max_semigroup_defect": semi,
                         "lower_bound_samples": len(lows), "lower_bound_all": all(lows),
                         "fitted_lower_c": c_low}
        mass_ok &= mass_err <= 1e-6
        semi_ok &= semi < 1e-6
        lower_ok &= all(lows)
        if kind == "euclidean":
            sup = harnack_sweep(E, KERNEL_TIMES, n=10).sup()
            ref = harnack_bound(N)
            harnack[M.label] = {"sup": sup, "closed_form": ref, "rel_gap": abs(sup - ref) / ref,
                                "exact_sup": 2 ** (N / 2) * math.exp(0.25)}
    harnack_ok = all(h["rel_gap"] <= 0.10 for h in harnack.values())
    details = {"models": rows, "harnack": harnack, "mass_ok": mass_ok, "semigroup_ok": semi_ok,
               "lower_bound_ok": lower_ok, "harnack_closed_form_ok": harnack_ok}
    return mass_ok and semi_ok and lower_ok and harnack_ok, details


def criterion_3() -> CriterionResult:
    return _timed(3, "heat kernel suite", 60.0, _kernel_suite)


# ------------------------------------------------------------------ 4


def _cantor() -> tuple[bool, dict]:
    cases = [(1, 3.0, 10), (1, 5.0, 10), (2, 2.0, 5), (2, 3.0, 5)]
    out, ok = {}, True
    for N, p, n in cases:
        C = cantor_mod.cantor_levels(N, p, n)
        res = float(np.max(C.identity_residuals()))
        below = bool(np.all(C.log_ratios < math.log(0.5)))
        entry = {"max_identity_residual": res, "ratios_below_half": below}
        ok &= res <= 1e-10 and below
        lo = C.rbar_lower
        if p > fujita_exponent(N) + 1e-12:
            lower = bool(np.all(C.ratios[1:] >= lo))
            entry.update(rbar_lower=lo, min_ratio_n_ge_2=float(np.min(C.ratios[1:])),
                         lower_bound_ok=lower)
            ok &= lower
        if N == 1 and p == 3.0:
            rel = max(abs(math.expm1(float(C.log_levels_mp[k] - cantor_mod.critical_closed_form_log(k))))
                      for k in range(1, n + 1))
            entry["closed_form_max_rel"] = rel
            ok &= rel <= 1e-12
        out[f"N={N},p={p:g}"] = entry
    return ok, out


def criterion_4() -> CriterionResult:
    return _timed(4, "Cantor construction", 5.0, _cantor)


# ------------------------------------------------------------------ 5


def _ratio_evidence() -> tuple[bool, dict]:
    coarse = ratio_curve(1, 3.0, 8)
    fine = ratio_curve(1, 3.0, 8, order=16, h0=0.5, n_partial=96)
    p = coarse.p
    r = coarse.ratio
    inc = bool(np.all(np.diff(r) > 0))
    growth = float(r[8] ** p / r[2] ** p)
    marg = coarse.margins()
    stab = fit_stability(coarse, fine)
    stable = stab["c_rel_change"] <= 0.2 and stab["C_rel_change"] <= 0.2
    ok = inc and growth >= 2 and bool(np.all(marg >= 0)) and stable
    return ok, {"ratio": r, "lower_sum": coarse.lower_sum, "strictly_increasing": inc,
                "growth_8_over_2": growth, "min_margin": float(np.min(marg)), "fit": stab}


def criterion_5() -> CriterionResult:
    return _timed(5, "maximal-operator ratio growth", 300.0, _ratio_evidence)


# ------------------------------------------------------------------ 6


def _solver_calibration() -> tuple[bool, dict]:
    C1 = make_manifold("circle", 1, 1.0)
    g = S.make_grid(C1)
    blow = S.blowup_probe(C1, np.ones(g.n), 3.0, 2.0, grid=g)
    blow_ok = blow.blown and abs(blow.time - 0.5) <= 0.05 * 0.5
    # monotone Picard iterates: constant data (exact ODE oracle) and a Dirac mass
    pic_c = S.picard_solve(C1, uniform_density(C1, 0.5), 2.0, 0.5, grid=g)
    exact = 1.0 / (1.0 / 0.5 - 0.5)
    const_err = float(np.max(np.abs(pic_c.u[-1] - exact))) / exact
    E1 = make_manifold("euclidean", 1)
    ge = S.make_grid(E1)
    sup_rows = {}
    mono_ok = pic_c.status == "converged" and pic_c.min_monotone_gap >= -1e-10
    dom_ok = True
    for m in (0.1, 0.5):
        prob = S.make_problem(E1, dirac(E1, m), 2.0, 1.0, ge)
        pic = S.picard_solve(E1, prob.mu, 2.0, 1.0, prob=prob)
        ubar = 2.0 * prob.U
        cert = S.supersolution_check(prob, ubar)
        dom = float(np.min(ubar - pic.u))
        mono_ok &= pic.status == "converged" and pic.min_monotone_gap >= -1e-10
        dom_ok &= cert["certified"] and dom >= -1e-12 * float(np.max(ubar))
        sup_rows[f"dirac_mass={m:g}"] = {"status": pic.status, "iterations": pic.iterations,
                                         "min_monotone_gap": pic.min_monotone_gap,
                                         "certified": cert["certified"], "min_dominance": dom}
    ok = blow_ok and mono_ok and dom_ok and const_err < 1e-3
    return ok, {"blowup": blow.to_dict(), "blowup_ok": blow_ok, "constant_data_rel_error": const_err,
                "constant_status": pic_c.status, "monotone_ok": mono_ok, "supersolution_ok": dom_ok,
                "supersolutions": sup_rows}


def criterion_6() -> CriterionResult:
    return _timed(6, "solver calibration", 120.0, _solver_calibration)


# ------------------------------------------------------------------ 7


def singular_family_bracket(M=None, p: float = 5.0, T: float = 1.0, C_lo: float = 0.2,
                            C_hi: float = 0.5, rtol: float = 1e-2, grid: S.Grid | None = None):
    M = M or make_manifold("euclidean", 1)
    g = grid or S.make_grid(M)
    fam = lambda C: singular_profile(M, p, C).profile(g.r)
    cl = S.profile_classifier(M, fam, p, T, S.IterationConfig(), g, dt_start=1e-9)
    return S.threshold_bisect(cl, C_lo, C_hi, rtol)


def _threshold() -> tuple[bool, dict]:
    br = singular_family_bracket()
    return br.rel_width <= 1e-2 and br.monotone, br.to_dict()


def criterion_7() -> CriterionResult:
    return _timed(7, "threshold bracket for the singular family", 600.0, _threshold)


# ------------------------------------------------------------------ 8


def trace_pairings(M, mu, p: float = 2.0, T: float = 0.5, k_max: int = 12,
                   psi: Callable = lambda r: np.exp(-r ** 2)):
    """Pairings int psi u(t_k) along t_k = 2^-k and the exact value int psi dmu."""
    g = S.make_grid(M)
    tk = [2.0 ** -k for k in range(k_max + 1) if 2.0 ** -k <= T]
    prob = S.make_problem(M, mu, p, T, g, extra_times=tk)
    res = S.picard_solve(M, mu, p, T, prob=prob)
    idx = [int(np.argmin(np.abs(prob.times - t))) for t in tk]
    pair = S.initial_trace(g, res.u[idx], psi)
    if hasattr(mu, "weights"):
        target = float(np.sum(mu.weights * psi(np.zeros(len(mu.weights)))))
    else:
        target = g.integrate(mu.value * psi(g.r))
    return np.array(tk), pair, target, res


def _trace() -> tuple[bool, dict]:
    out, ok = {}, True
    for kind, k in (("euclidean", 0.0), ("circle", 1.0)):
        M = make_manifold(kind, 1, k)
        # small data: the Duhamel term shifts the pairing by O(m^{p-1} sqrt t) for atoms
        for name, mu in (("dirac", dirac(M, 0.1)), ("uniform", uniform_density(M, 0.5))):
            tk, pair, target, res = trace_pairings(M, mu)
            rel = np.abs(pair - target) / abs(target)
            # the error has dropped over the last three halvings and meets the tolerance
            conv = bool(rel[-1] <= 1e-3 and rel[-1] < rel[-4])
            out[f"{M.label}/{name}"] = {"status": res.status, "target": target,
                                        "final_rel_error": float(rel[-1]), "rel_errors": rel}
            ok &= conv and res.status == "converged"
    return ok, out


def criterion_8() -> CriterionResult:
    return _timed(8, "initial trace", 60.0, _trace)


# ------------------------------------------------------------------ 9


def _covering(seed: int = 0) -> tuple[bool, dict]:
    dis1 = {w: cov.dis_greedy(1, w).count for w in (2.0, 1.0, 0.5, 1 / 6)}
    ok = all(v == 2 for v in dis1.values())
    E1 = make_manifold("euclidean", 1)
    parts = []
    for s in range(5):
        F = cov.random_family(E1, 60, 0.05, 0.5, 1.0, seed=seed + s)
        P = cov.besicovitch_partition(E1, F, 1.0, seed=seed + s)
        parts.append({"count": P.count, "disjoint": P.verify_disjoint(), "covers": P.covers_centers()})
        ok &= P.count <= 5 and P.verify_disjoint() and P.covers_centers()
    packs = {}
    for kind, k in (("euclidean", 0.0), ("sphere", 1.0), ("hyperbolic", 1.0)):
        M = make_manifold(kind, 2, k)
        pk = cov.pac_greedy(M, origin(M), 0.5, seed=seed)
        cert = pk.certificate()
        packs[M.label] = cert
        ok &= cert["ok"] and cert["count"] <= 100
    return ok, {"dis_1d": dis1, "partitions_1d": parts, "packings_2d": packs}


def criterion_9() -> CriterionResult:
    return _timed(9, "covering and packing", 30.0, _covering)


# ------------------------------------------------------------------ 10


def _growth() -> tuple[bool, dict]:
    out, ok = {}, True
    for kind, N, k, p in (("euclidean", 1, 0.0, 5.0), ("euclidean", 2, 0.0, 3.0),
                          ("sphere", 2, 1.0, 3.0)):
        M = make_manifold(kind, N, k)
        v = growth_classify(dirac(M, 1.0), M, p, 1.0)
        flagged = not v.conditions["nec_iii"]["bounded"]
        out[f"dirac/{M.label}/p={p:g}"] = {"nec_iii_flagged": flagged,
                                           "nec_iii_C": v.conditions["nec_iii"]["C"]}
        ok &= flagged
    for kind, N, k, p in (("euclidean", 1, 0.0, 5.0), ("euclidean", 1, 0.0, 3.0),
                          ("euclidean", 2, 0.0, 3.0), ("sphere", 2, 1.0, 2.0)):
        M = make_manifold(kind, N, k)
        rep = lumu_bracket_check(critical_profile(M, p, 1.0), M, p, 1.0)
        out[f"critical/{M.label}/p={p:g}"] = {"C": rep.C, "stable": rep.stable, "passed": rep.passed}
        ok &= rep.passed
    return ok, out


def criterion_10() -> CriterionResult:
    return _timed(10, "growth classification", 60.0, _growth)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]


def run_all(echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        r = fn()
        results.append(r)
        if echo:
            echo(r.line())
    return results
