"""Initial data: atomic, radial, uniform, Cantor and grid measures.

Every measure exposes the same small interface:

* ``total_mass()``
* ``ball_mass(z, rho)``: mu(B(z, rho)) for an ambient point z
* ``candidate_centers(rho)``: centers tried by :func:`sup_ball_mass`
* ``nodes(t=None)``: a discrete (points, weights) representation used for
  pairings and heat extensions; ``t`` sets the resolution scale
* ``heat_extension(E, x, t)``: int K(x, y, t) dmu(y)
* ``pairing(psi)``: int psi dmu
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .cantor import CantorSet, phi_log
from .geometry import (DomainError, ModelManifold, ball_volume, exp_chart, fujita_exponent,
                       geodesic_distance, log_chart, origin, radial_weight,
                       sn, sphere_area, threshold_radii)
from .heat_kernel import composite_gl, gauss_legendre, graded_edges
from .io import write_csv

# ------------------------------------------------------------------ cutoff


@dataclass(frozen=True)
class CutoffFunction:
    """C^2 monotone cutoff: 1 on (-inf, lo], 0 on [hi, inf), quintic smoothstep between.

    With ``increasing=True`` the mirror image 1 - eta is returned.
    """
    lo: float = 0.5
    hi: float = 1.0
    increasing: bool = False

    def _s(self, x):
        s = np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return s

    def __call__(self, x):
        s = self._s(x)
        step = s ** 3 * (10 - 15 * s + 6 * s * s)
        out = step if self.increasing else 1.0 - step
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x):
        s = self._s(x)
        d = 30 * s * s * (1 - s) ** 2 / (self.hi - self.lo)
        out = d if self.increasing else -d
        return float(out) if np.ndim(out) == 0 else out

    def second_derivative(self, x):
        s = self._s(x)
        d = 60 * s * (1 - s) * (1 - 2 * s) / (self.hi - self.lo) ** 2
        out = d if self.increasing else -d
        return float(out) if np.ndim(out) == 0 else out


ETA = CutoffFunction()

# ------------------------------------------------------------------ h pair


class MonotonicityError(ValueError):
    def __init__(self, msg: str, witness: float):
        super().__init__(f"{msg} (witness z = {witness:.6g})")
        self.witness = witness


@dataclass(frozen=True)
class HPair:
    """Convex increasing h with inverse: z^alpha, or z log(A + z)^beta at p = p_F."""
    p: float
    dim: int
    variant: str           # "power" or "log"
    exponent: float        # alpha or beta
    log_offset: float = math.nan

    def h(self, z):
        z = np.asarray(z, dtype=float)
        if self.variant == "power":
            out = z ** self.exponent
        else:
            out = z * np.log(self.log_offset + z) ** self.exponent
        return float(out) if out.ndim == 0 else out

    __call__ = h

    def h_inv(self, y, rtol: float = 1e-15):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("h_inv needs y >= 0")
        if self.variant == "power":
            out = y ** (1.0 / self.exponent)
            return float(out) if out.ndim == 0 else out
        A, b = self.log_offset, self.exponent
        lo = y / np.log(A + y) ** b
        hi = y / math.log(A) ** b
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            big = self.h(mid) > y
            hi = np.where(big, mid, hi)
            lo = np.where(big, lo, mid)
            if np.all(hi - lo <= rtol * np.maximum(hi, 1e-300)):
                break
        out = 0.5 * (lo + hi)
        return float(out) if out.ndim == 0 else out

    def monotonicity_report(self, z) -> dict:
        """Sampled checks of convexity and of the three monotonicity claims."""
        z = np.sort(np.asarray(z, dtype=float))
        hz = self.h(z)
        lz = np.log(z)
        lh = np.log(hz)
        slopes = np.diff(hz) / np.diff(z)
        return {
            "increasing": bool(np.all(np.diff(hz) > 0)),
            "convex": bool(np.all(np.diff(slopes) >= -1e-12 * np.abs(slopes[1:]))),
            "zp_over_h_increasing": bool(np.all(np.diff(self.p * lz - lh) > 0)),
            "h_over_z_increasing": bool(np.all(np.diff(lh - lz) > 0)),
            "inverse_error": float(np.max(np.abs(self.h_inv(hz) - z) / z)),
        }


def default_log_offset(dim: int, p: float, beta: float) -> float:
    return max(math.exp(dim), math.exp(1.0 + beta / (p - 1)))


def make_h(p: float, N: int, alpha: float | None = None, beta: float | None = None,
           log_offset: float | None = None, grid=None) -> HPair:
    """Build h for p > p_F (power) or p = p_F (log-corrected).

    For p > p_F, alpha must also stay below N(p-1)/2 so that h(f) stays locally
    integrable for the critical profile f ~ r^{-2/(p-1)}; the default is the
    midpoint of (1, min(p, N(p-1)/2)).  Other defaults: beta = N/4 and the log
    offset max(e^N, e^{1 + beta/(p-1)}).  For p = p_F the monotonicity of
    z^{p-1} log(A+z)^{-beta} is re-verified on a log-spaced grid.
    """
    pF = fujita_exponent(N)
    if p < pF - 1e-12:
        raise ValueError("make_h needs p >= p_F")
    if p > pF + 1e-12:
        top = min(p, 0.5 * N * (p - 1))
        alpha = 0.5 * (1 + top) if alpha is None else float(alpha)
        if not 1 < alpha < top:
            raise ValueError(f"alpha must lie in (1, {top:g}) = (1, min(p, N(p-1)/2))")
        return HPair(p, N, "power", alpha)
    beta = N / 4 if beta is None else float(beta)
    if not 0 < beta < N / 2:
        raise ValueError("beta must lie in (0, N/2)")
    A = default_log_offset(N, p, beta) if log_offset is None else float(log_offset)
    # A = e^N is the boundary of the open condition; accept it up to rounding
    if A < math.exp(N) * (1 - 1e-12):
        raise MonotonicityError("log offset must exceed e^N", A)
    z = np.geomspace(1e-12, 1e12, 4001) if grid is None else np.asarray(grid, dtype=float)
    g = (p - 1) * np.log(z) - beta * np.log(np.log(A + z))
    bad = np.nonzero(np.diff(g) <= 0)[0]
    if bad.size:
        raise MonotonicityError("z^{p-1} log(A+z)^{-beta} is not increasing", float(z[bad[0]]))
    return HPair(p, N, "log", beta, A)


# ------------------------------------------------------------------ profiles


@dataclass(frozen=True)
class RadialProfile:
    """Radial density f(r) = scale * g(r) with a singularity ~ r^{-s} at r = 0.

    Quadrature runs in v = r^{N - s}, which turns r^{N-1} f(r) dr into a
    bounded integrand.  Beyond ``r_cap`` the profile is held at f(r_cap).
    """
    func: Callable
    singular_exponent: float = 0.0
    r_cap: float = math.inf
    support: float = math.inf

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r >= self.support, 0.0, self.func(np.minimum(r, self.r_cap)))
        return out

    # substitution r <-> v on (0, r_cap]
    def to_v(self, r, N):
        return np.asarray(r, dtype=float) ** (N - self.singular_exponent)

    def from_v(self, v, N):
        return np.asarray(v, dtype=float) ** (1.0 / (N - self.singular_exponent))

    def dr_dv(self, v, N):
        e = 1.0 / (N - self.singular_exponent)
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return e * v ** (e - 1)

    def weighted(self, M: ModelManifold, v):
        """f(r) * area(S_r) * dr/dv as a function of v (bounded near v = 0)."""
        N = M.dim
        r = self.from_v(v, N)
        s = self.singular_exponent
        e = 1.0 / (N - s)
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(r > 0, sn(M, r) / np.where(r > 0, r, 1.0), 1.0)
            # r^{s} f(r) is bounded; r^{N-1-s} dr/dv = e
            rf = np.where(r > 0, r ** s * self(r), self._limit_rs_f())
        area = 2.0 if N == 1 else sphere_area(N)
        return area * ratio ** (N - 1) * rf * e

    def _limit_rs_f(self) -> float:
        r = 1e-100
        return float(r ** self.singular_exponent * self.func(np.array(r)))

    def powered(self, q: float) -> "RadialProfile":
        f = self.func
        return RadialProfile(lambda r: f(r) ** q, self.singular_exponent * q, self.r_cap,
                             self.support)


@dataclass(frozen=True)
class LogProfile(RadialProfile):
    """scale * (L/r)^N log(shift + L/r)^{-N/2-1} (times a cutoff) with v = log(shift + L/r)^{-N/2}.

    In v the weighted integrand is smooth and bounded down to v = 0.
    """
    length: float = 1.0
    shift: float = math.e
    scale: float = 1.0
    dim: int = 1
    cutoff: Callable | None = None

    def to_v(self, r, N):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(self.shift + self.length / r) ** (-0.5 * N)

    def from_v(self, v, N):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            den = np.expm1(v ** (-2.0 / N) - math.log(self.shift)) * self.shift
        return np.where(v > 0, self.length / np.where(den > 0, den, np.inf), 0.0)

    def weighted(self, M: ModelManifold, v):
        N = M.dim
        v = np.asarray(v, dtype=float)
        r = self.from_v(v, N)
        w = np.where(v > 0, v ** (2.0 / N), 0.0)          # 1/log(shift + L/r)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ratio = np.where(r > 0, sn(M, r) / np.where(r > 0, r, 1.0), 1.0)
            damp = 1.0 / (-np.expm1(math.log(self.shift) - 1.0 / np.where(w > 0, w, 1e-300)))
            cut = 1.0 if self.cutoff is None else self.cutoff(r / self.length)
            cut = np.where(r >= self.support, 0.0, cut)
        area = 2.0 if N == 1 else sphere_area(N)
        return area * ratio ** (N - 1) * self.scale * self.length ** N * damp * cut * (2.0 / N)

    def powered(self, q: float) -> RadialProfile:
        f = self.func
        return RadialProfile(lambda r: f(r) ** q, self.dim * q, self.r_cap, self.support)


# ------------------------------------------------------------------ measures


@dataclass
class SupMass:
    value: float
    center: np.ndarray
    resolution: float
    n_candidates: int


class RadonMeasure:
    """Base class; subclasses implement mass queries and a discrete node set."""
    manifold: ModelManifold

    def total_mass(self) -> float:
        raise NotImplementedError

    def ball_mass(self, z, rho: float) -> float:
        raise NotImplementedError

    def candidate_centers(self, rho: float) -> list:
        return [origin(self.manifold)]

    def nodes(self, t: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def probe_points(self, n: int) -> list:
        return self.candidate_centers(1.0)[:n]

    def heat_extension(self, E, x, t: float) -> float:
        pts, w = self.nodes(t)
        if len(w) == 0:
            return 0.0
        return float(np.sum(w * np.asarray(E(x, pts, t))))

    def pairing(self, psi: Callable) -> float:
        pts, w = self.nodes()
        if len(w) == 0:
            return 0.0
        return float(np.sum(w * np.asarray(psi(pts))))

    def refine_center(self, z, rho: float) -> tuple[float, np.ndarray]:
        return self.ball_mass(z, rho), z


@dataclass
class AtomicMeasure(RadonMeasure):
    manifold: ModelManifold
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")

    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def ball_mass(self, z, rho: float) -> float:
        if len(self.weights) == 0:
            return 0.0
        d = np.atleast_1d(geodesic_distance(self.manifold, self.points, np.asarray(z, float)))
        return float(np.sum(self.weights[d < rho]))

    def candidate_centers(self, rho: float) -> list:
        pts = [p for p in self.points]
        if 1 < len(pts) <= 60:
            v = log_chart(self.manifold, self.points)
            for i in range(len(pts)):
                for j in range(i + 1, len(pts)):
                    pts.append(exp_chart(self.manifold, 0.5 * (v[i] + v[j])))
        return pts or [origin(self.manifold)]

    def nodes(self, t=None):
        return self.points, self.weights


def dirac(M: ModelManifold, mass: float = 1.0, at=None) -> AtomicMeasure:
    z = origin(M) if at is None else np.asarray(at, dtype=float)
    return AtomicMeasure(M, z[None, :], np.array([float(mass)]))


def zero_measure(M: ModelManifold) -> AtomicMeasure:
    return AtomicMeasure(M, np.zeros((0, M.ambient_dim)), np.zeros(0))


def _cap_fraction(N: int, theta):
    """Fraction of S^{N-1} within angle theta of a pole (N >= 2)."""
    theta = np.clip(np.asarray(theta, dtype=float), 0.0, math.pi)
    if N == 2:
        return theta / math.pi
    if N == 3:
        return 0.5 * (1 - np.cos(theta))
    a = 0.5 * (N - 1)
    half = 0.5 * special.betainc(a, 0.5, np.sin(theta) ** 2)
    return np.where(theta <= 0.5 * math.pi, half, 1.0 - half)


def _cos_angle(M: ModelManifold, r, D: float, rho: float):
    """cos of the angle at the center where d(center, y) = r meets d(z, y) = rho, d(center, z) = D."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if M.kind == "euclidean":
            c = (r * r + D * D - rho * rho) / (2 * r * D)
        elif M.kind == "sphere":
            s = M.sqrt_k
            c = (np.cos(s * rho) - np.cos(s * r) * math.cos(s * D)) / (np.sin(s * r) * math.sin(s * D))
        else:
            s = M.sqrt_k
            c = (np.cosh(s * r) * math.cosh(s * D) - np.cosh(s * rho)) / (np.sinh(s * r) * math.sinh(s * D))
    return np.clip(np.nan_to_num(c, nan=1.0, posinf=1.0, neginf=-1.0), -1.0, 1.0)


@dataclass
class RadialDensity(RadonMeasure):
    """Density f(d(center, x)) dV on an isotropic model."""
    manifold: ModelManifold
    profile: RadialProfile
    center: np.ndarray | None = None
    label: str = "radial"
    rtol: float = 1e-10

    def __post_init__(self):
        if not self.manifold.is_radial:
            raise DomainError("radial densities need an isotropic model")
        o = origin(self.manifold)
        if self.center is not None and not np.allclose(self.center, o):
            # the models are homogeneous, so centering at the chart origin loses nothing
            raise DomainError("radial densities are centered at the chart origin")
        self.center = o

    @property
    def rmax(self) -> float:
        M = self.manifold
        lim = M.injectivity_radius if M.is_compact else math.inf
        return min(self.profile.support, lim)

    # -- one-dimensional radial integrals
    def _mass_v(self, a: float, b: float, frac=None) -> float:
        """int_a^b f w dr (optionally times frac(r)) with a, b <= r_cap."""
        M, P = self.manifold, self.profile
        va, vb = float(P.to_v(a, M.dim)) if a > 0 else 0.0, float(P.to_v(b, M.dim))
        if vb <= va:
            return 0.0
        if frac is None:
            g = lambda v: float(P.weighted(M, v))
        else:
            g = lambda v: float(P.weighted(M, v) * frac(float(P.from_v(v, M.dim))))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(g, va, vb, epsabs=0.0, epsrel=self.rtol, limit=400)
        return val

    def _mass_r(self, a: float, b: float, frac=None) -> float:
        M, P = self.manifold, self.profile
        if b <= a:
            return 0.0
        if math.isinf(b):
            if M.is_compact:
                b = M.injectivity_radius
            else:
                raise DomainError("infinite radial range with unbounded profile")
        g = (lambda r: float(P(r) * radial_weight(M, r))) if frac is None else \
            (lambda r: float(P(r) * radial_weight(M, r) * frac(r)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(g, a, b, epsabs=0.0, epsrel=self.rtol, limit=400)
        return val

    def radial_mass(self, a: float, b: float, frac=None, breaks: Sequence[float] = ()) -> float:
        """int_a^b f(r) A(r) frac(r) dr over the radial range, split at breaks."""
        b = min(b, self.rmax)
        if b <= a:
            return 0.0
        cap = self.profile.r_cap
        pts = sorted({a, b, *[x for x in breaks if a < x < b], *([cap] if a < cap < b else [])})
        total = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            total += self._mass_v(lo, hi, frac) if hi <= cap else self._mass_r(lo, hi, frac)
        return total

    def total_mass(self) -> float:
        if math.isinf(self.rmax):
            return self.radial_mass(0.0, 1e3)
        return self.radial_mass(0.0, self.rmax)

    def centered_mass(self, rho: float) -> float:
        return self.radial_mass(0.0, rho)

    def is_nonincreasing(self, n: int = 2001) -> bool:
        """Profile nonincreasing in r on a log-spaced sample of (0, rmax)."""
        top = self.rmax if math.isfinite(self.rmax) else 1e3
        r = np.geomspace(1e-12 * top, top * (1 - 1e-12), n)
        with np.errstate(all="ignore"):
            f = np.asarray(self.profile(r), float)
        return bool(np.all(np.isfinite(f)) and np.all(np.diff(f) <= 1e-12 * np.abs(f[:-1])))

    def ball_mass(self, z, rho: float) -> float:
        M = self.manifold
        D = float(geodesic_distance(M, self.center, np.asarray(z, float)))
        return self.ball_mass_at_distance(D, rho)

    def ball_mass_at_distance(self, D: float, rho: float) -> float:
        M = self.manifold
        if D <= 1e-15 * max(rho, 1.0):
            return self.centered_mass(rho)
        if M.dim == 1:
            L = 2 * M.injectivity_radius if M.kind == "circle" else math.inf

            def dist(x):
                if math.isinf(L):
                    return abs(x)
                x = math.fmod(abs(x), L)
                return min(x, L - x)

            def frac(r):
                return 0.5 * ((dist(r - D) < rho) + (dist(r + D) < rho))
            brk = [abs(D - rho), D + rho]
            if not math.isinf(L):
                brk += [L - D - rho, L - D + rho, D + rho - L]
            return self.radial_mass(0.0, D + rho, frac, [b for b in brk if b > 0])
        inner = max(rho - D, 0.0)
        full = self.radial_mass(0.0, inner) if inner > 0 else 0.0
        lo = abs(D - rho)
        hi = D + rho
        if M.kind == "sphere":
            hi = min(hi, M.injectivity_radius)
        N = M.dim

        def frac(r):
            return float(_cap_fraction(N, np.arccos(_cos_angle(M, r, D, rho))))
        return full + self.radial_mass(lo, hi, frac)

    def candidate_centers(self, rho: float) -> list:
        M = self.manifold
        out = [self.center]
        for D in rho * np.array([0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5]):
            if M.is_compact and D >= M.injectivity_radius:
                continue
            out.append(exp_chart(M, _direction(M) * D))
        return out

    def refine_center(self, z, rho: float):
        M = self.manifold
        D0 = float(geodesic_distance(M, self.center, np.asarray(z, float)))
        hi = 2 * rho if not M.is_compact else min(2 * rho, 0.999 * M.injectivity_radius)
        res = optimize.minimize_scalar(lambda D: -self.ball_mass_at_distance(D, rho),
                                       bounds=(max(0.0, D0 - 0.25 * rho), min(hi, D0 + 0.25 * rho)),
                                       method="bounded", options={"xatol": 1e-4 * rho})
        val = -res.fun
        if val > self.ball_mass(z, rho):
            return val, exp_chart(M, _direction(M) * res.x)
        return self.ball_mass(z, rho), z

    def probe_points(self, n: int) -> list:
        M = self.manifold
        R = self.rmax if math.isfinite(self.rmax) else 1.0
        return [self.center] + [exp_chart(M, _direction(M) * D)
                                for D in np.linspace(0, 0.9 * R, n)[1:]]

    def radial_edges(self, t: float | None, focus: float, R: float) -> np.ndarray:
        """Panel edges on [0, R]: geometric toward r = 0, graded around r = focus."""
        base = [R * 2.0 ** -np.arange(60, 0, -1), np.linspace(0.0, R, 33)]
        if t is not None:
            h0 = 0.1 * math.sqrt(t)
            f = min(max(focus, 0.0), R)
            if f > 0:
                left = graded_edges(0.0, f, h0, 1.3)
                base.append(f - left[::-1] + 0.0)
            base.append(graded_edges(f, R, h0, 1.3) if f < R else np.array([R]))
        e = np.unique(np.clip(np.concatenate(base), 0.0, R))
        return e

    def radial_nodes(self, t: float | None = None, order: int = 16,
                     focus: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Radial nodes r_i and weights with sum w_i g(r_i) ~ int g(r) f(r) A(r) dr.

        ``t`` is the length scale (squared) that must be resolved around ``focus``.
        """
        M, P = self.manifold, self.profile
        R = self.rmax
        if math.isinf(R):
            R = 50.0 if t is None else focus + 20 * math.sqrt(t) + 10.0
        edges = self.radial_edges(t, focus, R)
        cap = P.r_cap
        inner = edges[edges <= cap]
        rs, ws = [], []
        if len(inner) > 1:
            v, wv = composite_gl(np.unique(P.to_v(inner, M.dim)), order)
            rs.append(P.from_v(v, M.dim))
            ws.append(wv * P.weighted(M, v))
        outer = np.unique(np.concatenate([[cap] if cap < R else [], edges[edges > cap]]))
        if len(outer) > 1:
            r, wr = composite_gl(outer, order)
            rs.append(r)
            ws.append(wr * P(r) * radial_weight(M, r))
        return np.concatenate(rs), np.concatenate(ws)

    def nodes(self, t: float | None = None, order: int = 16, n_angle: int = 32):
        M = self.manifold
        r, w = self.radial_nodes(t, order)
        keep = w != 0
        r, w = r[keep], w[keep]
        dirs, dw = _sphere_rule(M.dim, n_angle)
        pts = exp_chart(M, (r[:, None, None] * dirs[None, :, :]).reshape(-1, M.dim))
        return pts, (w[:, None] * dw[None, :]).ravel()

    def heat_extension(self, E, x, t: float) -> float:
        M = self.manifold
        d0 = float(geodesic_distance(M, self.center, np.asarray(x, float)))
        r, w = self.radial_nodes(t, focus=d0)
        if d0 == 0.0:
            return float(np.sum(w * E.radial(r, t)))
        from .heat_kernel import _law_of_cosines
        if M.dim == 1:
            dirs = [abs(r - d0), r + d0]
            if M.kind == "circle":
                L = 2 * M.injectivity_radius
                dirs = [np.minimum(np.mod(d, L), L - np.mod(d, L)) for d in dirs]
            return float(0.5 * np.sum(w * (E.radial(dirs[0], t) + E.radial(dirs[1], t))))
        th, wth = _angle_rule(M.dim)
        dz = _law_of_cosines(M, r[:, None], d0, th[None, :])
        return float(np.sum(w * (E.radial(dz, t) @ wth)))

    def powered(self, q: float) -> "RadialDensity":
        return RadialDensity(self.manifold, self.profile.powered(q), self.center,
                             f"{self.label}^{q:g}", self.rtol)


def _direction(M: ModelManifold) -> np.ndarray:
    e = np.zeros(M.dim)
    e[0] = 1.0
    return e


def _angle_rule(N: int, order: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """Polar-angle rule on [0, pi] whose weights integrate over S^{N-1} normalised to 1."""
    edges = np.concatenate([[0.0], math.pi * 2.0 ** -np.arange(20, -1, -1)])
    th, w = composite_gl(edges, order // 3 if order >= 6 else 2)
    w = w * np.sin(th) ** (N - 2) * sphere_area(N - 1) / sphere_area(N)
    return th, w


def _sphere_rule(N: int, n: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions in R^N and weights summing to 1."""
    if N == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if N == 2:
        a = 2 * math.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(a), np.sin(a)], axis=1), np.full(n, 1.0 / n)
    if N == 3:
        x, w = gauss_legendre(n // 2)
        a = 2 * math.pi * (np.arange(n) + 0.5) / n
        ct = x[:, None] * np.ones(n)[None, :]
        st = np.sqrt(1 - ct ** 2)
        d = np.stack([ct, st * np.cos(a)[None, :], st * np.sin(a)[None, :]], axis=-1).reshape(-1, 3)
        ww = (0.5 * w[:, None] * np.full(n, 1.0 / n)[None, :]).ravel()
        return d, ww
    raise NotImplementedError("direction rules for N <= 3")


@dataclass
class ConstantDensity(RadonMeasure):
    """c dV on the whole manifold."""
    manifold: ModelManifold
    value: float = 1.0

    def total_mass(self) -> float:
        return self.value * self.manifold.volume() if self.value > 0 else 0.0

    def ball_mass(self, z, rho: float) -> float:
        M = self.manifold
        if M.kind == "cylinder":
            raise DomainError("constant density ball masses need an isotropic model")
        if M.is_compact and rho >= M.injectivity_radius:
            return self.total_mass()
        return self.value * float(ball_volume(M, rho))

    def heat_extension(self, E, x, t: float) -> float:
        return self.value  # stochastic completeness

    def nodes(self, t=None, order: int = 16, n_angle: int = 32):
        M = self.manifold
        if not M.is_compact:
            raise DomainError("node sets for constant densities need a compact model")
        R = M.injectivity_radius
        r, w = composite_gl(np.linspace(0, R, 33), order)
        w = w * radial_weight(M, r) * self.value
        dirs, dw = _sphere_rule(M.dim, n_angle)
        pts = exp_chart(M, (r[:, None, None] * dirs[None, :, :]).reshape(-1, M.dim))
        return pts, (w[:, None] * dw[None, :]).ravel()

    def powered(self, q: float) -> "ConstantDensity":
        return ConstantDensity(self.manifold, self.value ** q)


@dataclass
class GridDensity(RadonMeasure):
    """Values on ambient nodes with volume weights (a quadrature representation)."""
    manifold: ModelManifold
    points: np.ndarray
    volumes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, float))
        self.volumes = np.asarray(self.volumes, float)
        self.values = np.asarray(self.values, float)
        if np.any(self.values < 0) or np.any(self.volumes <= 0):
            raise ValueError("grid densities need values >= 0 and positive volumes")

    def total_mass(self) -> float:
        return float(np.sum(self.values * self.volumes))

    def ball_mass(self, z, rho: float) -> float:
        d = geodesic_distance(self.manifold, self.points, np.asarray(z, float))
        return float(np.sum((self.values * self.volumes)[np.asarray(d) < rho]))

    def candidate_centers(self, rho: float) -> list:
        idx = np.nonzero(self.values > 0)[0]
        step = max(1, len(idx) // 200)
        return [self.points[i] for i in idx[::step]] or [origin(self.manifold)]

    def nodes(self, t=None):
        return self.points, self.values * self.volumes

    def powered(self, q: float) -> "GridDensity":
        return GridDensity(self.manifold, self.points, self.volumes, self.values ** q)


@dataclass
class CantorDensity(RadonMeasure):
    """prod_i chi_{I_n}(coord_i / a) on the chart cube (0, a)^N at the chart origin."""
    manifold: ModelManifold
    cantor: CantorSet
    level: int
    scale: float | None = None

    def __post_init__(self):
        M = self.manifold
        if M.dim != self.cantor.dim:
            raise ValueError("dimension mismatch between manifold and Cantor set")
        rho_inf = threshold_radii(M).rho_inf
        a_default = min(rho_inf, 1.0) / math.sqrt(M.dim)
        if self.scale is None:
            self.scale = a_default
        if math.sqrt(M.dim) * self.scale > rho_inf * (1 + 1e-12):
            raise DomainError("chart cube exceeds the normal chart ball")

    def intervals(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.cantor.intervals(self.level)
        return self.scale * a, self.scale * b

    def log_total_mass_euclidean(self) -> float:
        """log of (2^n R_n a)^N (the chart-Lebesgue mass)."""
        n = self.level
        return self.manifold.dim * (n * math.log(2) + self.cantor.log_levels[n] + math.log(self.scale))

    def total_mass(self) -> float:
        M = self.manifold
        if M.dim == 1:
            return math.exp(self.log_total_mass_euclidean())
        pts, w = self.nodes()
        return float(np.sum(w))

    def _chart_coord(self, z) -> np.ndarray:
        return log_chart(self.manifold, np.asarray(z, float))

    def ball_mass(self, z, rho: float) -> float:
        M = self.manifold
        if M.dim == 1:
            c = float(self._chart_coord(z)[0])
            a, b = self.intervals()
            shifts = [0.0]
            if M.kind == "circle":
                L = 2 * M.injectivity_radius
                shifts = [-L, 0.0, L]
            tot = 0.0
            for s in shifts:
                lo, hi = c - rho + s, c + rho + s
                tot += float(np.sum(np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)))
            return tot
        pts, w = self.nodes()
        d = geodesic_distance(M, pts, np.asarray(z, float))
        return float(np.sum(w[np.asarray(d) < rho]))

    def candidate_centers(self, rho: float) -> list:
        M = self.manifold
        if M.dim == 1:
            a, b = self.intervals()
            ends = np.concatenate([a, b])
            cs = np.unique(np.concatenate([ends - rho, ends + rho, 0.5 * (a + b)]))
            return [exp_chart(M, np.array([c])) for c in cs]
        a, b = self.intervals()
        mids = 0.5 * (a + b)
        g = np.array(np.meshgrid(mids, mids, indexing="ij")).reshape(2, -1).T
        return [exp_chart(M, x) for x in g]

    def nodes(self, t=None, order: int = 4):
        M = self.manifold
        a, b = self.intervals()
        x, w = gauss_legendre(order)
        half = 0.5 * (b - a)
        c1 = (0.5 * (a + b)[:, None] + half[:, None] * x[None, :]).ravel()
        w1 = (half[:, None] * w[None, :]).ravel()
        if M.dim == 1:
            return exp_chart(M, c1[:, None]), w1
        X, Y = np.meshgrid(c1, c1, indexing="ij")
        W = np.outer(w1, w1)
        xi = np.stack([X.ravel(), Y.ravel()], axis=1)
        r = np.linalg.norm(xi, axis=1)
        jac = np.ones_like(r) if M.kind == "euclidean" else np.where(
            r > 0, (sn(M, r) / np.where(r > 0, r, 1.0)) ** (M.dim - 1), 1.0)
        return exp_chart(M, xi), W.ravel() * jac

    def probe_points(self, n: int) -> list:
        return self.candidate_centers(0.0)[:n]


def cantor_density(S: CantorSet, n: int, M: ModelManifold, scale: float | None = None) -> CantorDensity:
    if n > S.n_max:
        raise ValueError("level exceeds the computed range")
    return CantorDensity(M, S, n, scale)


# ------------------------------------------------------------ constructors


def critical_profile(M: ModelManifold, p: float, T: float, center=None,
                     cutoff: CutoffFunction = ETA) -> RadialDensity:
    """The steepest admissible radial datum, cut off at rho_T."""
    N = M.dim
    pF = fujita_exponent(N)
    if p < pF - 1e-12:
        raise ValueError("critical_profile needs p >= p_F")
    rT = threshold_radii(M, T).rho_T
    if p > pF + 1e-12:
        s = 2.0 / (p - 1)
        prof = RadialProfile(lambda r: r ** (-s) * cutoff(r / rT), s, math.inf, rT)
        return RadialDensity(M, prof, center, "critical-power")

    def f(r):
        return (rT / r) ** N * np.log(math.e ** 2 + rT / r) ** (-0.5 * N - 1) * cutoff(r / rT)
    prof = LogProfile(f, N, math.inf, rT, rT, math.e ** 2, 1.0, N, cutoff)
    return RadialDensity(M, prof, center, "critical-log")


def singular_profile(M: ModelManifold, p: float, C: float, center=None) -> RadialDensity:
    """C d^{-2/(p-1)} (p > p_F) or C d^{-N} log(e + 1/d)^{-N/2-1} (p = p_F).

    The formula is used inside B(center, rho_inf); outside the density is held
    at its value on the sphere of radius rho_inf.
    """
    N = M.dim
    pF = fujita_exponent(N)
    if p < pF - 1e-12:
        raise ValueError("singular_profile needs p >= p_F")
    cap = threshold_radii(M).rho_inf
    C = float(C)
    if p > pF + 1e-12:
        s = 2.0 / (p - 1)
        prof = RadialProfile(lambda r: C * r ** (-s), s, cap)
        return RadialDensity(M, prof, center, "singular-power")

    def f(r):
        return C * r ** (-N) * np.log(math.e + 1 / r) ** (-0.5 * N - 1)
    prof = LogProfile(f, N, cap, math.inf, 1.0, math.e, C, N)
    return RadialDensity(M, prof, center, "singular-log")


def uniform_density(M: ModelManifold, value: float = 1.0) -> ConstantDensity:
    return ConstantDensity(M, value)


# ------------------------------------------------------------ sup of balls


def sup_ball_mass(mu: RadonMeasure, rho: float, refine: bool = True) -> SupMass:
    """Largest mu(B(z, rho)) over the measure's candidate centers (a lower bound of the sup)."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    if isinstance(mu, AtomicMeasure) and len(mu.weights) == 0:
        return SupMass(0.0, origin(mu.manifold), 0.0, 0)
    if isinstance(mu, RadialDensity) and mu.is_nonincreasing():
        # rearrangement: balls about the center carry the most mass
        return SupMass(float(mu.centered_mass(rho)), np.asarray(mu.center), 0.0, 1)
    cands = mu.candidate_centers(rho)
    vals = [mu.ball_mass(z, rho) for z in cands]
    i = int(np.argmax(vals))
    best, center = vals[i], cands[i]
    if refine:
        v2, c2 = mu.refine_center(center, rho)
        if v2 > best:
            best, center = v2, c2
    res = rho * 0.05 if isinstance(mu, RadialDensity) else 0.0
    return SupMass(float(best), np.asarray(center), res, len(cands))


def uloc_norm(u0: RadonMeasure, q: float, rho: float) -> float:
    """sup_z (int_{B(z, rho)} u0^q dV)^{1/q} for a density u0."""
    if q < 1:
        raise ValueError("q must be at least 1")
    if isinstance(u0, AtomicMeasure):
        raise TypeError("uloc norms are defined for densities")
    if isinstance(u0, ConstantDensity) and u0.value == 0:
        return 0.0
    powered = u0.powered(q)
    return sup_ball_mass(powered, rho).value ** (1.0 / q)


# ------------------------------------------------------------ growth checks


@dataclass
class GrowthRow:
    rho: float
    bound_name: str
    mass: float
    bound_value: float

    @property
    def ratio(self) -> float:
        if self.mass == 0:
            return 0.0
        return self.mass / self.bound_value


@dataclass
class GrowthVerdict:
    conditions: dict                 # name -> {"C": ..., "bounded": ..., "applies": ...}
    rows: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        fitted = {k: v["C"] for k, v in self.conditions.items()}
        write_csv(path, ["rho", "bound_name", "mass", "bound_value", "fitted_C"],
                  [[r.rho, r.bound_name, r.mass, r.bound_value, fitted[r.bound_name]]
                   for r in self.rows])


def _trend_diverging(rho: np.ndarray, ratio: np.ndarray, slope_tol: float) -> bool:
    """True if the ratio keeps growing toward the smallest radii (log-log slope < -tol)."""
    rho = np.asarray(rho)
    order = np.argsort(rho)
    rho, ratio = rho[order], np.asarray(ratio)[order]
    if np.all(ratio == 0):
        return False
    sel = rho <= rho[0] * 10
    if sel.sum() < 3 or np.any(ratio[sel] <= 0):
        return bool(ratio[0] > 0 and np.argmax(ratio) == 0)
    slope = np.polyfit(np.log(rho[sel]), np.log(ratio[sel]), 1)[0]
    return bool(slope < -slope_tol and np.argmax(ratio) == 0)


def growth_bounds(M: ModelManifold, p: float, T: float, eps: float = 0.1) -> dict:
    """Right-hand sides (without constants) of the growth conditions, as functions of rho."""
    N = M.dim
    g = N - 2.0 / (p - 1)
    rT = threshold_radii(M, T).rho_T
    return {
        "nec_i": lambda r: rT ** g + 0 * r,
        "nec_ii": lambda r: np.log(math.e + rT / r) ** (-0.5 * N),
        "nec_iii": lambda r: r ** g,
        "suf": lambda r: r ** g * np.log(math.e + rT / r) ** (-1.0 / (p - 1) - eps),
        "nex": lambda r: r ** g * phi_log(r, p),
    }


def growth_classify(mu: RadonMeasure, M: ModelManifold, p: float, T: float, eps: float = 0.1,
                    rho_min: float | None = None, n_rho: int = 41,
                    slope_tol: float = 0.05) -> GrowthVerdict:
    """Fit the smallest constants in each growth condition on a log grid of radii.

    A condition is flagged unbounded when its mass/bound ratio is maximal at
    the smallest radius and still growing over the last decade.
    """
    N = M.dim
    pF = fujita_exponent(N)
    rT = threshold_radii(M, T).rho_T
    rho_min = 1e-4 * rT if rho_min is None else rho_min
    rhos = np.geomspace(rho_min, rT * (1 - 1e-9), n_rho)
    masses = np.array([sup_ball_mass(mu, r).value for r in rhos])
    bounds = growth_bounds(M, p, T, eps)
    applies = {"nec_i": p < pF - 1e-12, "nec_ii": abs(p - pF) <= 1e-12,
               "nec_iii": p > pF + 1e-12, "suf": p >= pF - 1e-12, "nex": p >= pF - 1e-12}
    verdict = GrowthVerdict({})
    for name, fn in bounds.items():
        if name == "nec_i":
            sel_r = np.array([rhos[-1]])
            sel_m = masses[-1:]
        else:
            sel_r, sel_m = rhos, masses
        bv = np.asarray(fn(sel_r), dtype=float)
        ratios = np.where(sel_m > 0, sel_m / bv, 0.0)
        C = float(np.max(ratios)) if len(ratios) else 0.0
        div = False if name == "nec_i" else _trend_diverging(sel_r, ratios, slope_tol)
        verdict.conditions[name] = {"C": C, "bounded": bool(np.isfinite(C) and not div),
                                    "applies": bool(applies[name])}
        verdict.rows += [GrowthRow(float(r), name, float(m), float(b))
                         for r, m, b in zip(sel_r, sel_m, bv)]
    return verdict


@dataclass
class BracketReport:
    rho: np.ndarray
    mass: np.ndarray
    reference: np.ndarray
    C: float
    stable: bool

    @property
    def ratio(self) -> np.ndarray:
        return self.mass / self.reference

    @property
    def passed(self) -> bool:
        r = self.ratio
        return bool(self.stable and np.all(r >= 1 / self.C * (1 - 1e-12)) and
                    np.all(r <= self.C * (1 + 1e-12)))

    def to_csv(self, path) -> None:
        write_csv(path, ["rho", "bound_name", "mass", "bound_value", "fitted_C"],
                  [[r, "lumu", m, b, self.C] for r, m, b in zip(self.rho, self.mass, self.reference)])


def lumu_bracket_check(mu: RadialDensity, M: ModelManifold, p: float, T: float,
                       rho_min: float = 1e-4, n_rho: int = 41, slope_tol: float = 0.05) -> BracketReport:
    """Check C^{-1} <= sup mu(B(z,rho)) / ref(rho) <= C with one fitted C on [rho_min, rho_T)."""
    N = M.dim
    pF = fujita_exponent(N)
    rT = threshold_radii(M, T).rho_T
    rhos = np.geomspace(rho_min, rT * (1 - 1e-9), n_rho)
    mass = np.array([sup_ball_mass(mu, r).value for r in rhos])
    if p > pF + 1e-12:
        ref = rhos ** (N - 2.0 / (p - 1))
    else:
        ref = rT ** N * np.log(math.e + rT / rhos) ** (-0.5 * N)
    ratio = mass / ref
    C = float(max(np.max(ratio), 1.0 / np.min(ratio)))
    # stability: no power-law drift at the small-radius end
    sel = rhos <= rhos[0] * 10
    slope = abs(np.polyfit(np.log(rhos[sel]), np.log(ratio[sel]), 1)[0])
    return BracketReport(rhos, mass, ref, C, bool(slope < slope_tol))
