"""Config-driven experiment runners used by the command line.

Every runner takes the validated config, the output directory and the seed,
writes its CSV/JSON/PNG files and returns ``(checks, summary)`` where
``checks`` maps invariant names to booleans.  Nothing in the data files
depends on wall-clock time.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import acceptance
from . import cantor as cantor_mod
from . import covering as cov
from . import maximal as mx
from . import plotting
from . import solver as S
from .geometry import (ModelManifold, comparison_report, exp_chart, fujita_exponent, make_manifold,
                       origin, threshold_radii)
from .heat_kernel import (HeatKernel, KernelBoundReport, fit_gaussian_constants, gaussian_bounds_check,
                          harnack_bound, harnack_sweep, kernel_mass, semigroup_defect)
from .io import write_csv, write_json
from .measures import (critical_profile, dirac, growth_classify, singular_profile, uniform_density,
                       zero_measure)

DEFAULT_MANIFOLD = {
    "geometry-check": {"kind": "sphere", "dim": 2, "curvature": 1.0},
    "kernel-check": {"kind": "sphere", "dim": 2, "curvature": 1.0},
    "trace": {"kind": "euclidean", "dim": 1},
    "sweep-threshold": {"kind": "euclidean", "dim": 1},
    "supersolution": {"kind": "euclidean", "dim": 1},
    "cover": {"kind": "euclidean", "dim": 2},
    "classify-growth": {"kind": "euclidean", "dim": 1},
}


def build_manifold(desc: dict | None, experiment: str) -> ModelManifold:
    desc = desc or DEFAULT_MANIFOLD.get(experiment, {"kind": "euclidean", "dim": 1})
    return make_manifold(desc["kind"], desc["dim"], desc.get("curvature", 0.0), desc.get("sphere_dim"))


def build_measure(desc: dict | None, M: ModelManifold, p: float, T: float, default: dict):
    desc = desc or default
    kind = desc["kind"]
    if kind == "dirac":
        return dirac(M, desc.get("mass", 1.0))
    if kind == "zero":
        return zero_measure(M)
    if kind == "uniform":
        return uniform_density(M, desc.get("value", 1.0))
    if kind == "critical":
        return critical_profile(M, p, T)
    if kind == "singular":
        return singular_profile(M, p, desc.get("C", 1.0))
    raise ValueError(f"unknown measure kind {kind!r}")


DEFAULT_PT = {
    "trace": (2.0, 0.5),
    "sweep-threshold": (5.0, 1.0),
    "supersolution": (2.0, 1.0),
    "classify-growth": (5.0, 1.0),
}


def _p_T(cfg: dict, experiment: str) -> tuple[float, float]:
    p, T = DEFAULT_PT[experiment]
    return float(cfg.get("p", p)), float(cfg.get("T", T))


# ------------------------------------------------------------ geometry


def run_geometry(cfg, out: Path, seed: int):
    M = build_manifold(cfg.get("manifold"), "geometry-check")
    prm = cfg.get("params", {})
    rT = threshold_radii(M)
    r_hi = prm.get("r_max", math.pi / (4 * M.sqrt_k) if M.curvature > 0 else 1.0)
    radii = np.linspace(0.0, r_hi, int(prm.get("n_radii", 100)) + 2)[1:-1]
    rep = comparison_report(M, radii, seed=seed)
    rep.to_csv(out / "geometry_bounds.csv")
    xs = [r.r for r in rep.rows if r.bound_name == "distance_upper" and r.valid]
    plotting.scatter_plot(out / "geometry_slack.png",
                          [r.r for r in rep.rows if r.valid], [r.slack for r in rep.rows if r.valid],
                          xlabel="r", ylabel="rhs - lhs", title=f"comparison slack on {M.label}",
                          hline=0.0)
    summary = {"manifold": M.label, "fujita_exponent": fujita_exponent(M.dim), "rho_inf": rT.rho_inf,
               "rows": len(rep.rows), "failures": len(rep.failures()), "n_distance_samples": len(xs)}
    return {"comparison_bounds": rep.all_pass}, summary


# ------------------------------------------------------------ kernel


def run_kernel(cfg, out: Path, seed: int):
    M = build_manifold(cfg.get("manifold"), "kernel-check")
    prm = cfg.get("params", {})
    tol = cfg.get("tolerances", {})
    ts = [float(t) for t in prm.get("t_values", [0.01, 0.1, 1.0])]
    T_h = float(prm.get("T_horizon", 2.0))
    E = HeatKernel(M)
    x = origin(M)
    rng = np.random.default_rng(seed)
    _, c_low = fit_gaussian_constants(E, T_h)
    mass_rows, semi_rows = [], []
    low = KernelBoundReport("lower_gaussian")
    for t in ts:
        mass_rows.append((t, kernel_mass(E, t)))
        dmax = min(2.0 * math.sqrt(t), 0.9 * M.injectivity_radius)
        for d in (0.0, 0.5 * dmax, dmax):
            v = np.zeros(M.dim)
            v[0] = d
            for sf in (0.5, 0.25):
                semi_rows.append((t, d, sf, semigroup_defect(E, x, exp_chart(M, v), sf * t, (1 - sf) * t)))
        if t < T_h:
            for d in rng.uniform(0.0, 0.999 * min(M.injectivity_radius, 6 * math.sqrt(T_h)), 8):
                v = np.zeros(M.dim)
                v[0] = d
                chk = gaussian_bounds_check(E, x, exp_chart(M, v), t, T_h, math.inf, c_low)
                low.rows.append((d, t, chk["lower_ratio"], c_low, chk["lower_ratio"] / c_low))
    write_csv(out / "kernel_mass.csv", ["t", "mass"], mass_rows)
    write_csv(out / "semigroup.csv", ["t", "d", "s_fraction", "relative_defect"], semi_rows)
    hs = harnack_sweep(E, ts, n=10)
    write_csv(out / "kernel_bounds.csv", ["bound_id", "d", "t", "lhs", "rhs", "ratio"],
              [["harnack", *r] for r in hs.rows] + [["lower_gaussian", *r] for r in low.rows])
    d = np.linspace(0.0, min(M.injectivity_radius, 3.0), 200)
    plotting.line_plot(out / "kernel_profiles.png", d, {f"t={t:g}": E.radial(d, t) for t in ts},
                       xlabel="d", ylabel="K(d, t)", logy=True, markers=False, title=M.label)
    checks = {
        "mass": all(abs(m - 1) <= tol.get("mass", 1e-6) for _, m in mass_rows),
        "semigroup": all(r[3] < tol.get("semigroup", 1e-6) for r in semi_rows),
        "lower_gaussian": bool(np.all(low.ratios >= 1.0)) if low.rows else True,
        "harnack_finite": bool(math.isfinite(hs.sup())),
    }
    summary = {"manifold": M.label, "max_mass_error": max(abs(m - 1) for _, m in mass_rows),
               "max_semigroup_defect": max(r[3] for r in semi_rows), "fitted_lower_c": c_low,
               "harnack_sup": hs.sup()}
    if M.kind == "euclidean":
        ref = harnack_bound(M.dim)
        summary.update(harnack_closed_form=ref, harnack_rel_gap=abs(hs.sup() - ref) / ref)
        checks["harnack_closed_form"] = abs(hs.sup() - ref) / ref <= tol.get("harnack", 0.10)
    return checks, summary


# ------------------------------------------------------------ solver experiments


def run_trace(cfg, out: Path, seed: int):
    M = build_manifold(cfg.get("manifold"), "trace")
    p, T = _p_T(cfg, "trace")
    prm = cfg.get("params", {})
    width = float(prm.get("psi_width", 1.0))
    mu = build_measure(cfg.get("measure"), M, p, T, {"kind": "dirac", "mass": 0.1})
    psi = lambda r: np.exp(-(np.asarray(r) / width) ** 2)
    tk, pair, target, res = acceptance.trace_pairings(M, mu, p, T, int(prm.get("k_max", 12)), psi)
    rel = np.abs(pair - target) / abs(target) if target else np.abs(pair)
    k0 = int(round(-math.log2(tk[0])))
    write_csv(out / "trace.csv", ["k", "t", "pairing", "target", "rel_error"],
              [(k0 + i, t, v, target, e) for i, (t, v, e) in enumerate(zip(tk, pair, rel))])
    plotting.line_plot(out / "trace.png", tk, {"relative error": np.maximum(rel, 1e-300)},
                       xlabel="t", ylabel="|<psi, u(t)> - <psi, mu>| / |<psi, mu>|", logx=True, logy=True)
    tol = cfg.get("tolerances", {}).get("trace", 1e-3)
    checks = {"picard_converged": res.status == "converged", "trace_tolerance": bool(rel[-1] <= tol),
              "trace_decreasing": bool(len(rel) < 4 or rel[-1] < rel[-4])}
    return checks, {"manifold": M.label, "target": target, "final_rel_error": float(rel[-1]),
                    "picard": res.summary()}


def run_sweep(cfg, out: Path, seed: int):
    M = build_manifold(cfg.get("manifold"), "sweep-threshold")
    p, T = _p_T(cfg, "sweep-threshold")
    prm = cfg.get("params", {})
    rtol = float(prm.get("rtol", 1e-2))
    br = acceptance.singular_family_bracket(M, p, T, float(prm.get("C_lo", 0.2)),
                                            float(prm.get("C_hi", 0.5)), rtol)
    write_csv(out / "bracket.csv", ["step", "C", "blown"],
              [(i, c, int(b)) for i, (c, b) in enumerate(br.trajectory)])
    traj = sorted(br.trajectory)
    plotting.line_plot(out / "bracket.png", [c for c, _ in traj], {"blow-up": [int(b) for _, b in traj]},
                       xlabel="C", ylabel="blow-up before T")
    checks = {"bracket_width": br.rel_width <= rtol, "monotone": br.monotone}
    return checks, {"manifold": M.label, "p": p, "T": T, **{k: v for k, v in br.to_dict().items()
                                                             if k != "trajectory"}}


def run_supersolution(cfg, out: Path, seed: int):
    M = build_manifold(cfg.get("manifold"), "supersolution")
    p, T = _p_T(cfg, "supersolution")
    prm = cfg.get("params", {})
    factor = float(prm.get("factor", 2.0))
    mu = build_measure(cfg.get("measure"), M, p, T, {"kind": "dirac", "mass": 0.1})
    grid = S.make_grid(M)
    prob = S.make_problem(M, mu, p, T, grid)
    res = S.picard_solve(M, mu, p, T, prob=prob)
    ubar = factor * prob.U
    cert = S.supersolution_check(prob, ubar)
    dom = float(np.min(ubar - res.u))
    S.write_time_series(out / "picard_time_series.csv", res)
    write_csv(out / "picard_increments.csv", ["iteration", "relative_increment"],
              list(enumerate(res.increments, start=2)))
    write_csv(out / "final_profile.csv", ["r", "u", "supersolution"],
              zip(grid.r, res.u[-1], ubar[-1]))
    sel = grid.r <= min(grid.R, 5.0)
    plotting.line_plot(out / "final_profile.png", grid.r[sel],
                       {"Picard limit": res.u[-1][sel], f"{factor:g} x linear": ubar[-1][sel]},
                       xlabel="r", ylabel=f"u(r, {T:g})", markers=False)
    checks = {"picard_converged": res.status == "converged",
              "monotone_iterates": res.min_monotone_gap >= -1e-10,
              "supersolution_certified": cert["certified"],
              "dominates_limit": dom >= -1e-12 * float(np.max(ubar))}
    return checks, {"manifold": M.label, "p": p, "T": T, "picard": res.summary(), **cert,
                    "min_dominance": dom}


# ------------------------------------------------------------ Cantor and maximal operator


def run_cantor(cfg, out: Path, seed: int):
    prm = cfg.get("params", {})
    N, p, n_max = int(prm.get("N", 1)), float(cfg.get("p", 3.0)), int(prm.get("n_max", 8))
    C = cantor_mod.cantor_levels(N, p, n_max)
    res = C.identity_residuals()
    write_json(out / "cantor.json", C.to_dict(max_interval_level=int(prm.get("interval_level", min(n_max, 6)))))
    write_csv(out / "cantor_levels.csv", ["n", "log_R", "log_r", "identity_residual"],
              [(0, 0.0, "", "")] + [(n, C.log_levels[n], C.log_ratios[n - 1], res[n - 1])
                                    for n in range(1, n_max + 1)])
    plotting.line_plot(out / "cantor_levels.png", np.arange(n_max + 1), {"-log R_n": -C.log_levels},
                       xlabel="n", ylabel="-log R_n", logy=True)
    tol = cfg.get("tolerances", {}).get("identity", 1e-10)
    checks = {"identity_residual": bool(np.max(res) <= tol),
              "ratios_below_half": bool(np.all(C.log_ratios < math.log(0.5)))}
    if p > fujita_exponent(N) + 1e-12 and n_max >= 2:
        checks["ratio_lower_bound"] = bool(np.all(C.ratios[1:] >= C.rbar_lower))
    if N == 1 and p == 3.0:
        rel = max(abs(math.expm1(float(C.log_levels_mp[k] - cantor_mod.critical_closed_form_log(k))))
                  for k in range(1, n_max + 1))
        checks["closed_form"] = rel <= 1e-12
    return checks, {"N": N, "p": p, "n_max": n_max, "max_identity_residual": float(np.max(res)),
                    "rbar": C.rbar}


def run_maximal(cfg, out: Path, seed: int):
    prm = cfg.get("params", {})
    N, p, n_max = int(prm.get("N", 1)), float(cfg.get("p", 3.0)), int(prm.get("n_max", 8))
    coarse = mx.ratio_curve(N, p, n_max)
    fine = mx.ratio_curve(N, p, n_max, order=16, h0=0.5, n_partial=96) if prm.get("refine", True) else None
    coarse.to_csv(out / "ratio_curve.csv")
    c, C = coarse.fit()
    plotting.line_plot(out / "ratio_curve.png", coarse.lower_sum,
                       {"ratio^p": coarse.ratio ** p, "fit c*S - C": c * coarse.lower_sum - C},
                       xlabel="lower sum S(n)", ylabel="ratio(n)^p")
    checks = {"strictly_increasing": bool(np.all(np.diff(coarse.ratio) > 0)),
              "margins_nonnegative": bool(np.all(coarse.margins() >= 0))}
    summary = {"N": N, "p": p, "n_max": n_max, "fitted_c": c, "fitted_C": C,
               "ratio": coarse.ratio, "lower_sum": coarse.lower_sum}
    if n_max >= 2:
        summary["growth_last_over_2"] = float(coarse.ratio[-1] ** p / coarse.ratio[2] ** p)
    if fine is not None:
        stab = mx.fit_stability(coarse, fine)
        summary["stability"] = stab
        lim = cfg.get("tolerances", {}).get("stability", 0.2)
        checks["fit_stable"] = stab["c_rel_change"] <= lim and stab["C_rel_change"] <= lim
    return checks, summary


# ------------------------------------------------------------ covering


def run_cover(cfg, out: Path, seed: int):
    M = build_manifold(cfg.get("manifold"), "cover")
    prm = cfg.get("params", {})
    rho = float(prm.get("rho", min(0.5, 0.99 * cov.packing_radius_limit(M))))
    a = origin(M)
    pk = cov.pac_greedy(M, a, rho, int(prm.get("n_candidates", 10_000)), seed=seed)
    cert = pk.certificate()
    write_csv(out / "packing.csv", ["index"] + [f"v{i}" for i in range(M.dim)],
              [(i, *v) for i, v in enumerate(pk.coords)])
    cover_ok, cover_info = True, {}
    try:
        cr = cov.half_ball_cover(M, a, rho, int(prm.get("n_samples", 10_000)), seed,
                                 audit_csv=out / "cover_audit.csv")
        cover_info = {"count": cr.count, "samples": cr.samples, "covered": cr.covered}
    except cov.CoverageError as exc:
        cover_ok, cover_info = False, {"error": str(exc)}
    xi = float(prm.get("xi", 1.0))
    F = cov.random_family(M, int(prm.get("family_size", 60)), 0.05 * xi, 0.5 * xi, xi, seed=seed)
    P = cov.besicovitch_partition(M, F, xi, seed=seed)
    write_csv(out / "partition.csv", ["ball"] + [f"x{i}" for i in range(F.centers.shape[1])] + ["radius", "label"],
              P.to_rows())
    if M.dim == 2:
        plotting.disc_plot(out / "partition.png", _chart_coords(M, F.centers), F.radii, P.labels,
                           title=f"Besicovitch subfamilies on {M.label}")
    checks = {"packing_certificate": cert["ok"], "packing_bound": cert["count"] <= cert["bound"],
              "half_ball_cover": cover_ok, "partition_disjoint": P.verify_disjoint(),
              "partition_covers_centers": P.covers_centers(), "partition_bound": P.count <= P.bound}
    summary = {"manifold": M.label, "rho": rho, "packing": cert, "cover": cover_info,
               "partition": {"count": P.count, "bound": P.bound, "selected": int(np.sum(P.labels >= 0))}}
    if M.dim == 1:
        summary["dis_1d"] = cov.dis_greedy(1, 1.0).count
        checks["dis_1d"] = summary["dis_1d"] == 2
    return checks, summary


def _chart_coords(M: ModelManifold, pts: np.ndarray) -> np.ndarray:
    """Chart coordinates at the origin, for plotting."""
    return cov.PointChart(M, origin(M)).log(pts)


# ------------------------------------------------------------ growth


def run_growth(cfg, out: Path, seed: int):
    M = build_manifold(cfg.get("manifold"), "classify-growth")
    p, T = _p_T(cfg, "classify-growth")
    prm = cfg.get("params", {})
    mu = build_measure(cfg.get("measure"), M, p, T, {"kind": "zero"})
    v = growth_classify(mu, M, p, T, float(prm.get("eps", 0.1)))
    v.to_csv(out / "growth.csv")
    rows = [r for r in v.rows if r.bound_name != "nec_i"]
    names = sorted({r.bound_name for r in rows})
    rho = sorted({r.rho for r in rows})
    series = {nm: [max(r.ratio, 1e-300) for r in rows if r.bound_name == nm] for nm in names}
    if any(r.mass > 0 for r in rows):
        plotting.line_plot(out / "growth.png", rho, series, xlabel="rho", ylabel="mass / bound",
                           logx=True, logy=True, markers=False)
    expect = prm.get("expect")
    if expect:
        checks = {f"{k}_bounded_is_{bool(e)}": v.conditions[k]["bounded"] == bool(e) for k, e in expect.items()}
    else:
        checks = {f"{k}_bounded": c["bounded"] for k, c in v.conditions.items() if c["applies"]}
    return checks, {"manifold": M.label, "p": p, "T": T, "conditions": v.conditions}


# ------------------------------------------------------------ all


def run_all(cfg, out: Path, seed: int):
    only = cfg.get("params", {}).get("criteria")
    results = []
    for i, fn in enumerate(acceptance.CRITERIA, start=1):
        if only and i not in only:
            continue
        r = fn()
        print(r.line(), flush=True)
        results.append(r)
    write_csv(out / "acceptance.csv", ["criterion", "name", "passed"],
              [(r.number, r.name, int(r.passed)) for r in results])
    write_json(out / "acceptance.json", {str(r.number): {"name": r.name, "passed": r.passed,
                                                         "details": r.details} for r in results})
    checks = {f"criterion_{r.number}": r.passed for r in results}
    timing = {f"criterion_{r.number}": {"runtime_s": r.runtime, "budget_s": r.budget} for r in results}
    return checks, {"timing": timing}


RUNNERS = {
    "geometry-check": run_geometry,
    "kernel-check": run_kernel,
    "trace": run_trace,
    "sweep-threshold": run_sweep,
    "supersolution": run_supersolution,
    "cantor": run_cantor,
    "maximal-ratio": run_maximal,
    "cover": run_cover,
    "classify-growth": run_growth,
    "all": run_all,
}
