"""Radial solvers for u_t - Lap u = u^p with measure initial data.

All fields are radial about the chart origin and live on a composite
Gauss-Legendre grid in r that is refined geometrically toward r = 0.
The heat semigroup acts through kernel matrices

    (S(tau) g)(r_i) = sum_j w_j Kbar(r_i, r_j, tau) g(r_j),

where Kbar is the kernel averaged over the geodesic sphere of radius r_j.
Rows whose discrete mass is far from one (kernel narrower than the local
node spacing, or truncated at the outer radius) are replaced by the
identity; the remaining rows are normalised so that constants are preserved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import (DomainError, ModelManifold, exp_chart,
                       laplacian_distance, radial_weight, threshold_radii)
from .heat_kernel import HeatKernel, _law_of_cosines, composite_gl, gauss_legendre, radial_table
from .io import write_csv
from .measures import (AtomicMeasure, ConstantDensity, CutoffFunction, GridDensity,
                       RadialDensity, RadonMeasure, _angle_rule)


class MonotonicityViolation(RuntimeError):
    """Picard iterates decreased somewhere: the quadrature is inconsistent."""


# ------------------------------------------------------------------ grid


@dataclass
class Grid:
    """Radial nodes on [0, R] with volume weights."""
    manifold: ModelManifold
    r: np.ndarray
    weights: np.ndarray
    R: float

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def points(self) -> np.ndarray:
        v = np.zeros((self.n, self.manifold.dim))
        v[:, 0] = self.r
        return exp_chart(self.manifold, v)

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * np.asarray(values)))


def make_grid(M: ModelManifold, R: float | None = None, h: float | None = None,
              order: int = 8, grade: int = 24) -> Grid:
    """Composite Gauss-Legendre radial grid.

    Compact models use R = inj (the whole manifold).  Panels have width ~h,
    and below h they shrink geometrically (``grade`` halvings) toward r = 0.
    """
    if not M.is_radial:
        raise DomainError("radial grids need an isotropic model")
    if M.is_compact:
        R = M.injectivity_radius
    elif R is None:
        R = 10.0
    h = R / 64 if h is None else h
    geo = h * 2.0 ** -np.arange(grade, 0, -1)
    edges = np.unique(np.concatenate([[0.0], geo, np.arange(h, R, h), [R]]))
    if edges[-1] - edges[-2] < 0.25 * h:
        edges = np.delete(edges, -2)
    r, w = composite_gl(edges, order)
    return Grid(M, r, w * radial_weight(M, r), R)


@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    t: float

    def __post_init__(self):
        if np.any(~np.isfinite(self.values)):
            raise FloatingPointError("non-finite field values")
        if np.any(self.values < 0):
            raise ValueError("fields are nonnegative")

    def sup(self) -> float:
        return float(np.max(self.values))

    def mass(self) -> float:
        return self.grid.integrate(self.values)


@dataclass
class IterationConfig:
    max_iters: int = 60
    tol: float = 1e-9
    ceiling: float = 1e8
    levels_per_unit: int = 64
    geometric_levels: int = 20
    dt: float = 1e-3
    dt_floor: float = 1e-12
    mass_tol: float = 0.05

    def __post_init__(self):
        for k in ("max_iters", "tol", "ceiling", "levels_per_unit", "dt", "dt_floor", "mass_tol"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


def time_levels(T: float, cfg: IterationConfig | None = None, extra: Sequence[float] = ()) -> np.ndarray:
    """0, geometric levels toward 0, and uniform levels up to T."""
    cfg = cfg or IterationConfig()
    K = max(8, int(math.ceil(cfg.levels_per_unit * T)))
    uni = T * np.arange(1, K + 1) / K
    geo = (T / K) * 2.0 ** -np.arange(1, cfg.geometric_levels + 1)
    ex = [t for t in extra if 0 < t <= T]
    return np.unique(np.concatenate([[0.0], geo, uni, ex]))


# ------------------------------------------------------------ heat operator


class HeatOperator:
    """Kernel matrices of the heat semigroup on a radial grid, cached by tau."""

    def __init__(self, E: HeatKernel, grid: Grid, mass_tol: float = 0.05):
        self.E = E
        self.grid = grid
        self.mass_tol = mass_tol
        self._cache: dict[float, np.ndarray] = {}

    def averaged_kernel(self, r_out, r_in, tau: float) -> np.ndarray:
        """Kernel averaged over the geodesic sphere of radius r_in about the center."""
        M, E = self.grid.manifold, self.E
        a = np.asarray(r_out, float)[:, None]
        b = np.asarray(r_in, float)[None, :]
        if M.dim == 1:
            d1, d2 = np.abs(a - b), a + b
            if M.kind == "circle":
                L = 2 * M.injectivity_radius
                d2 = np.minimum(d2, L - d2)
            return 0.5 * (E.radial(d1, tau) + E.radial(d2, tau))
        th, wth = _angle_rule(M.dim, 24)
        out = np.empty((a.shape[0], b.shape[1]))
        step = max(1, 2_000_000 // (b.shape[1] * len(th)))
        # series and quadrature kernels are slow pointwise; large batches go through a spline table
        kern = E.radial
        if a.shape[0] * b.shape[1] * len(th) > 20000:
            dmax = float(np.max(a)) + float(np.max(b))
            if M.kind == "sphere":
                dmax = min(dmax, M.injectivity_radius)
            table = radial_table(E, tau, dmax)
            kern = lambda d, _: table(d)
        for i in range(0, a.shape[0], step):
            dz = _law_of_cosines(M, a[i:i + step, 0][:, None, None], b[0][None, :, None],
                                 th[None, None, :])
            out[i:i + step] = kern(dz, tau) @ wth
        return out

    def matrix(self, tau: float) -> np.ndarray:
        key = float(f"{tau:.15g}")
        if key in self._cache:
            return self._cache[key]
        g = self.grid
        A = self.averaged_kernel(g.r, g.r, tau) * g.weights[None, :]
        mass = A.sum(axis=1)
        good = np.abs(mass - 1.0) <= self.mass_tol
        A[good] /= mass[good, None]
        A[~good] = 0.0
        idx = np.nonzero(~good)[0]
        A[idx, idx] = 1.0
        if len(self._cache) < 256:
            self._cache[key] = A
        return A

    def apply(self, values, tau: float) -> np.ndarray:
        if tau <= 0:
            return np.asarray(values, float).copy()
        return self.matrix(tau) @ values


# ------------------------------------------------------------ linear part


def _center_offset(mu: RadonMeasure) -> None:
    if isinstance(mu, AtomicMeasure):
        from .geometry import origin
        if len(mu.weights) and not np.allclose(mu.points, origin(mu.manifold)):
            raise DomainError("radial solvers need atoms at the chart origin")


def linear_values(E: HeatKernel, mu: RadonMeasure, grid: Grid, t: float) -> np.ndarray:
    """U(r_i, t) = int K(x_i, y, t) dmu(y) at the grid nodes."""
    if not t > 0:
        raise ValueError("t must be positive")
    _center_offset(mu)
    if isinstance(mu, AtomicMeasure):
        if len(mu.weights) == 0:
            return np.zeros(grid.n)
        return float(np.sum(mu.weights)) * E.radial(grid.r, t)
    if isinstance(mu, ConstantDensity):
        return np.full(grid.n, float(mu.value))
    if isinstance(mu, RadialDensity):
        return _radial_linear(E, mu, grid.r, t)
    if isinstance(mu, GridDensity):
        pts, w = mu.nodes()
        return np.array([float(np.sum(w * E(x, pts, t))) for x in grid.points])
    raise TypeError(f"unsupported measure {type(mu).__name__}")


def _radial_linear(E: HeatKernel, mu: RadialDensity, d0: np.ndarray, t: float,
                   chunk: int = 32) -> np.ndarray:
    M, P = mu.manifold, mu.profile
    R = mu.rmax
    if math.isinf(R):
        R = float(np.max(d0)) + 12 * math.sqrt(t) + 1.0
    h = max(0.25 * math.sqrt(t), R / 4000)
    edges = np.unique(np.concatenate([R * 2.0 ** -np.arange(60, 0, -1), np.arange(0.0, R, h), [R]]))
    cap = P.r_cap
    rs, ws = [], []
    inner = edges[edges <= cap]
    if len(inner) > 1:
        v, wv = composite_gl(np.unique(P.to_v(inner, M.dim)), 16)
        rs.append(P.from_v(v, M.dim))
        ws.append(wv * P.weighted(M, v))
    outer = np.unique(np.concatenate([[cap] if cap < R else [], edges[edges > cap]]))
    if len(outer) > 1:
        r, wr = composite_gl(outer, 16)
        rs.append(r)
        ws.append(wr * P(r) * radial_weight(M, r))
    r = np.concatenate(rs)
    w = np.concatenate(ws)
    keep = w != 0
    r, w = r[keep], w[keep]
    out = np.empty(len(d0))
    if M.dim == 1:
        for i in range(0, len(d0), chunk):
            a = d0[i:i + chunk, None]
            d1, d2 = np.abs(r[None, :] - a), r[None, :] + a
            if M.kind == "circle":
                L = 2 * M.injectivity_radius
                d2 = np.minimum(d2, L - d2)
            out[i:i + chunk] = 0.5 * (E.radial(d1, t) + E.radial(d2, t)) @ w
        return out
    th, wth = _angle_rule(M.dim)
    for i, a in enumerate(d0):
        if a == 0:
            out[i] = float(np.sum(w * E.radial(r, t)))
            continue
        dz = _law_of_cosines(M, r[:, None], float(a), th[None, :])
        out[i] = float(np.sum(w * (E.radial(dz, t) @ wth)))
    return out


def linear_evolve(M: ModelManifold, mu: RadonMeasure, t: float, grid: Grid,
                  E: HeatKernel | None = None) -> Field:
    E = E or HeatKernel(M)
    return Field(grid, linear_values(E, mu, grid, t), t)


def initial_values(mu: RadonMeasure, grid: Grid) -> np.ndarray:
    """Nodal values of the initial density (zero for purely atomic data)."""
    if isinstance(mu, ConstantDensity):
        return np.full(grid.n, float(mu.value))
    if isinstance(mu, RadialDensity):
        return np.asarray(mu.profile(grid.r), float)
    return np.zeros(grid.n)


# ------------------------------------------------------------ Duhamel map


@dataclass
class Problem:
    """Everything the Duhamel map needs: geometry, data, exponent and time levels."""
    manifold: ModelManifold
    mu: RadonMeasure
    p: float
    T: float
    grid: Grid
    times: np.ndarray
    E: HeatKernel
    op: HeatOperator
    U: np.ndarray            # linear part, shape (len(times), n)
    u0: np.ndarray           # initial density values (row 0)

    @property
    def shape(self):
        return self.U.shape


def make_problem(M: ModelManifold, mu: RadonMeasure, p: float, T: float,
                 grid: Grid | None = None, cfg: IterationConfig | None = None,
                 extra_times: Sequence[float] = (), E: HeatKernel | None = None) -> Problem:
    if not (p > 1 and T > 0):
        raise ValueError("need p > 1 and T > 0")
    cfg = cfg or IterationConfig()
    grid = grid or make_grid(M)
    E = E or HeatKernel(M)
    times = time_levels(T, cfg, extra_times)
    U = np.empty((len(times), grid.n))
    U[0] = initial_values(mu, grid)
    for k, t in enumerate(times[1:], start=1):
        U[k] = linear_values(E, mu, grid, t)
    return Problem(M, mu, float(p), float(T), grid, times, E, HeatOperator(E, grid, cfg.mass_tol),
                   U, U[0].copy())


def duhamel_part(prob: Problem, u: np.ndarray) -> np.ndarray:
    """int_0^t S(t-s) u(s)^p ds at every time level (trapezoid per step, semigroup recursion)."""
    u = np.asarray(u, float)
    if u.shape != prob.shape:
        raise ValueError("u must be given on every time level")
    D = np.zeros_like(u)
    up = u ** prob.p
    # the first (tiny) step uses its right end only: u(0)^p may not be integrable
    D[1] = (prob.times[1] - prob.times[0]) * up[1]
    for m in range(2, len(prob.times)):
        dt = prob.times[m] - prob.times[m - 1]
        D[m] = prob.op.apply(D[m - 1] + 0.5 * dt * up[m - 1], dt) + 0.5 * dt * up[m]
    return D


def duhamel_apply(prob: Problem, u: np.ndarray) -> np.ndarray:
    """Psi[u] = S(t) mu + int_0^t S(t-s) u(s)^p ds on all time levels."""
    out = prob.U + duhamel_part(prob, u)
    out[0] = prob.u0
    return out


@dataclass
class PicardResult:
    status: str                   # converged, ceiling_hit, max_iters
    iterations: int
    u: np.ndarray                 # last iterate on (times, nodes)
    increments: list
    min_monotone_gap: float
    problem: Problem = field(repr=False)

    def summary(self) -> dict:
        return {"status": self.status, "iterations": self.iterations,
                "sup_u": float(np.max(self.u)), "last_increment": self.increments[-1]
                if self.increments else 0.0, "min_monotone_gap": self.min_monotone_gap}

    def time_series(self) -> list:
        g = self.problem.grid
        return [(float(t), float(np.max(row)), g.integrate(row))
                for t, row in zip(self.problem.times, self.u)]


def picard_solve(M: ModelManifold, mu: RadonMeasure, p: float, T: float,
                 cfg: IterationConfig | None = None, grid: Grid | None = None,
                 prob: Problem | None = None, extra_times: Sequence[float] = ()) -> PicardResult:
    """Monotone iteration u_1 = U, u_{k+1} = Psi[u_k]."""
    cfg = cfg or IterationConfig()
    prob = prob or make_problem(M, mu, p, T, grid, cfg, extra_times)
    u = prob.U.copy()
    incs = []
    gap = math.inf
    status = "max_iters"
    it = 1
    if not np.any(u):
        return PicardResult("converged", 1, u, [0.0], 0.0, prob)
    for it in range(2, cfg.max_iters + 2):
        new = duhamel_apply(prob, u)
        scale = max(1.0, float(np.max(np.abs(u))))
        diff = new - u
        gap = min(gap, float(np.min(diff)) / scale)
        if np.min(diff) < -1e-10 * scale:
            raise MonotonicityViolation(f"iterate decreased by {-np.min(diff):.3e} at iteration {it}")
        inc = float(np.max(np.abs(diff))) / scale
        incs.append(inc)
        u = new
        if not np.all(np.isfinite(u)) or np.max(u) > cfg.ceiling:
            status = "ceiling_hit"
            break
        if inc < cfg.tol:
            status = "converged"
            break
    return PicardResult(status, it, u, incs, gap, prob)


def supersolution_check(prob: Problem, ubar: np.ndarray) -> dict:
    """min over nodes and levels of ubar - Psi[ubar] (>= 0 certifies a supersolution)."""
    ubar = np.asarray(ubar, float)
    if np.any(ubar < 0):
        raise ValueError("candidate must be nonnegative")
    psi = duhamel_apply(prob, ubar)
    defect = (ubar - psi)[1:]
    pos = ubar[1:] > 0
    rel = float(np.min(defect[pos] / ubar[1:][pos])) if np.any(pos) else 0.0
    return {"min_defect": float(np.min(defect)),
            "min_relative_defect": rel,
            "certified": bool(np.min(defect) >= -1e-12 * float(np.max(np.abs(ubar))))}


def h_transform_candidate(prob: Problem, h, c: float) -> np.ndarray:
    """2 c h^{-1}( S(t) h(f) ) for a radial density f (the critical-case construction)."""
    mu = prob.mu
    if not isinstance(mu, RadialDensity):
        raise TypeError("needs a radial density")
    f = mu.profile
    hf = RadialDensity(mu.manifold, _HProfile(f, h), None, "h(f)")
    out = np.empty(prob.shape)
    out[0] = 2 * c * mu.profile(prob.grid.r)
    for k, t in enumerate(prob.times[1:], start=1):
        out[k] = 2 * c * h.h_inv(np.maximum(_radial_linear(prob.E, hf, prob.grid.r, t), 0.0))
    return out


class _HProfile:
    """Profile h(c0 f) with a singular exponent scaled by the power of h."""

    def __init__(self, f, h):
        self.f, self.h = f, h
        s = f.singular_exponent * (h.exponent if h.variant == "power" else 1.0)
        from .measures import RadialProfile
        self._inner = RadialProfile(lambda r: h.h(f(r)), s, f.r_cap, f.support)

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def __call__(self, r):
        return self._inner(r)


# ------------------------------------------------------------ blow-up probe


def ode_step(u, p: float, dt: float):
    """Exact flow of u' = u^p over dt; returns (values, singular mask)."""
    u = np.asarray(u, float)
    with np.errstate(divide="ignore", over="ignore"):
        base = u ** (1 - p) - (p - 1) * dt
        sing = base <= 0
        out = np.where(sing, np.inf, np.where(u > 0, np.maximum(base, 1e-300) ** (-1 / (p - 1)), 0.0))
    return out, sing


@dataclass
class BlowupResult:
    blown: bool
    time: float
    steps: int
    sup_history: list

    def to_dict(self) -> dict:
        return {"blown": self.blown, "time": self.time, "steps": self.steps}


def blowup_probe(M: ModelManifold, u0, p: float, T: float, cfg: IterationConfig | None = None,
                 grid: Grid | None = None, op: HeatOperator | None = None,
                 dt_start: float | None = None) -> BlowupResult:
    """Lie splitting: exact kernel step, then exact ODE step.

    A step whose ODE flow is singular somewhere is retried with half the step;
    blow-up is reported when the step falls below ``dt_floor`` or the maximum
    exceeds ``ceiling``.  After a successful step the step size doubles again
    (up to ``cfg.dt``).

    ``u0`` is a Field or nodal values on ``grid``.
    """
    cfg = cfg or IterationConfig()
    if isinstance(u0, Field):
        grid, vals = u0.grid, u0.values.astype(float).copy()
    else:
        grid = grid or make_grid(M)
        vals = np.asarray(u0, float).copy()
    if np.any(vals < 0):
        raise ValueError("u0 must be nonnegative")
    op = op or HeatOperator(HeatKernel(M), grid, cfg.mass_tol)
    t = 0.0
    steps = 0
    hist = [(0.0, float(np.max(vals)) if vals.size else 0.0)]
    dt = cfg.dt if dt_start is None else dt_start
    if not np.any(vals):
        return BlowupResult(False, T, 0, hist)
    while t < T - 1e-15:
        step = min(dt, cfg.dt, T - t)
        if step < cfg.dt_floor:
            return BlowupResult(True, t, steps, hist)
        new = op.apply(vals, step)
        new, sing = ode_step(new, p, step)
        if np.any(sing):
            dt = 0.5 * step
            continue
        vals = new
        t += step
        steps += 1
        dt = min(cfg.dt, 2 * step)
        hist.append((t, float(np.max(vals))))
        if hist[-1][1] > cfg.ceiling:
            return BlowupResult(True, t, steps, hist)
    return BlowupResult(False, T, steps, hist)


@dataclass
class Bracket:
    lo: float
    hi: float
    trajectory: list             # (C, blown)
    monotone: bool

    @property
    def rel_width(self) -> float:
        return (self.hi - self.lo) / self.hi

    def to_dict(self) -> dict:
        return {"C_lo": self.lo, "C_hi": self.hi, "rel_width": self.rel_width,
                "monotone": self.monotone, "trajectory": self.trajectory}


def threshold_bisect(classify: Callable[[float], bool], C_lo: float, C_hi: float,
                     rtol: float = 1e-2, max_steps: int = 60) -> Bracket:
    """Bisection on C between a surviving C_lo and a blowing-up C_hi."""
    traj = []
    b_lo, b_hi = classify(C_lo), classify(C_hi)
    traj += [(C_lo, b_lo), (C_hi, b_hi)]
    if b_lo or not b_hi:
        raise ValueError("initial bracket has no sign change")
    lo, hi = C_lo, C_hi
    for _ in range(max_steps):
        if (hi - lo) / hi <= rtol:
            break
        mid = 0.5 * (lo + hi)
        b = classify(mid)
        traj.append((mid, b))
        if b:
            hi = mid
        else:
            lo = mid
    blown = [c for c, b in traj if b]
    alive = [c for c, b in traj if not b]
    mono = (not blown or not alive) or max(alive) < min(blown)
    return Bracket(lo, hi, traj, bool(mono))


def profile_classifier(M: ModelManifold, family: Callable[[float], np.ndarray], p: float, T: float,
                       cfg: IterationConfig | None = None, grid: Grid | None = None,
                       dt_start: float | None = None) -> Callable[[float], bool]:
    """C -> blow-up before T for data family(C) on a shared grid and heat operator."""
    cfg = cfg or IterationConfig()
    grid = grid or make_grid(M)
    op = HeatOperator(HeatKernel(M), grid, cfg.mass_tol)

    def classify(C: float) -> bool:
        return blowup_probe(M, family(C), p, T, cfg, grid, op, dt_start).blown
    return classify


# ------------------------------------------------------------ trace and test functions


def initial_trace(grid: Grid, fields: np.ndarray, psi: Callable) -> np.ndarray:
    """int psi u(., t_k) dV for each row of ``fields`` (psi evaluated on radii)."""
    w = grid.weights * np.asarray(psi(grid.r), float)
    return np.asarray(fields, float) @ w


def young_constant(p: float) -> float:
    """Sharp constant C with (2p/(p-1)) a b <= a^p + C b^{p/(p-1)} for a, b >= 0."""
    q = p / (p - 1)
    return (p - 1) * (2.0 / (p - 1)) ** q


@dataclass
class TestFunctionReport:
    lhs: float
    rhs: float
    C: float
    rho: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "C": self.C, "rho": self.rho, "pass": self.passed}


def test_function_parts(M: ModelManifold, rho: float, p: float, n_r: int = 64, n_t: int = 64):
    """int_0^T int_M phi^q ((phi_t + Lap phi)^-)^q dV dt for phi = eta(rho^2/(d^2+t) - 1).

    The integrand is supported in the annulus rho^2/2 < d^2 + t < rho^2, which is
    integrated in polar form d = s cos(a), sqrt(t) = s sin(a).
    """
    eta = CutoffFunction(0.0, 1.0, increasing=True)
    q = p / (p - 1)
    xs, ws = gauss_legendre(n_r)
    total = 0.0
    for lo_frac, hi_frac in [(0.0, 0.5), (0.5, 1.0)]:
        a = 0.5 * (hi_frac - lo_frac) * (xs + 1) + lo_frac       # angle fraction
        wa = 0.5 * (hi_frac - lo_frac) * ws
        th = 0.5 * math.pi * a                                    # angle in (0, pi/2)
        wth = 0.5 * math.pi * wa
        s_lo, s_hi = rho / math.sqrt(2), rho
        s = 0.5 * (s_hi - s_lo) * (xs + 1) + s_lo
        wsr = 0.5 * (s_hi - s_lo) * ws
        S, TH = np.meshgrid(s, th, indexing="ij")
        W = np.outer(wsr, wth)
        d = S * np.cos(TH)
        sig = S * np.sin(TH)                                      # sqrt(t)
        t = sig ** 2
        jac = S * 2 * sig                                         # dd dt = s * 2 sig ds dth
        X = d * d + t
        Phi = rho ** 2 / X - 1
        e1 = eta.derivative(Phi)
        e2 = eta.second_derivative(Phi)
        Phi_t = -rho ** 2 / X ** 2
        Phi_r = -2 * rho ** 2 * d / X ** 2
        Phi_rr = -2 * rho ** 2 / X ** 2 + 8 * rho ** 2 * d * d / X ** 3
        with np.errstate(divide="ignore", invalid="ignore"):
            lap_d = np.where(d > 0, laplacian_distance_safe(M, d), 0.0)
        lap_phi = e2 * Phi_r ** 2 + e1 * (Phi_rr + lap_d * Phi_r)
        neg = np.maximum(-(e1 * Phi_t + lap_phi), 0.0)
        phi = eta(Phi)
        integrand = phi ** q * neg ** q * radial_weight(M, d) * jac
        total += float(np.sum(W * integrand))
    return total


def laplacian_distance_safe(M: ModelManifold, d):
    d = np.asarray(d, float)
    out = np.zeros_like(d)
    ok = (d > 0) & (d < M.injectivity_radius)
    if M.dim > 1:
        out[ok] = laplacian_distance(M, d[ok])
    return out


def test_function_defect(M: ModelManifold, rho: float, T: float, p: float, mu: RadonMeasure,
                         C: float | None = None, solution: PicardResult | None = None) -> TestFunctionReport:
    """lhs = int phi(., 0)^{2p/(p-1)} dmu against C * (space-time integral), test ball at the origin."""
    rT = threshold_radii(M, T).rho_T
    if not 0 < rho < rT:
        raise DomainError("test_function_defect needs 0 < rho < rho_T")
    eta = CutoffFunction(0.0, 1.0, increasing=True)
    e = 2 * p / (p - 1)

    def phi0(r):
        r = np.asarray(r, float)
        with np.errstate(divide="ignore"):
            return eta(np.where(r > 0, rho ** 2 / np.maximum(r, 1e-300) ** 2 - 1, np.inf)) ** e

    C = young_constant(p) if C is None else C
    if isinstance(mu, AtomicMeasure):
        from .geometry import geodesic_distance, origin
        d = np.atleast_1d(geodesic_distance(M, mu.points, origin(M))) if len(mu.weights) else np.zeros(0)
        lhs = float(np.sum(mu.weights * phi0(d)))
    elif isinstance(mu, RadialDensity):
        r, w = mu.radial_nodes(rho ** 2)
        lhs = float(np.sum(w * phi0(r)))
    elif isinstance(mu, ConstantDensity):
        r, w = composite_gl(np.linspace(0, rho, 33), 16)
        lhs = float(np.sum(w * radial_weight(M, r) * mu.value * phi0(r)))
    else:
        pts, w = mu.nodes()
        from .geometry import geodesic_distance, origin
        lhs = float(np.sum(w * phi0(geodesic_distance(M, pts, origin(M)))))
    rhs = C * test_function_parts(M, rho, p)
    return TestFunctionReport(lhs, rhs, C, rho)


def write_time_series(path, result: PicardResult) -> None:
    write_csv(path, ["t", "sup_u", "mass"], result.time_series())
