"""Model Riemannian manifolds with closed-form geometry.

Points are stored as ambient coordinate arrays (last axis):

* Euclidean R^N: the point itself, shape (..., N).
* Sphere S^N(kappa) and the circle: unit vectors in R^{N+1}; the metric is
  the round metric of radius 1/sqrt(kappa).
* Hyperbolic H^N(kappa): hyperboloid model, x0^2 - |x'|^2 = 1, x0 > 0.
* Cylinder R^{N-l} x S^l: concatenation of a flat part and a unit vector.

Normal coordinates ("chart coordinates") are taken at :func:`origin`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .io import write_csv

KINDS = ("euclidean", "sphere", "hyperbolic", "circle", "cylinder")


class DomainError(ValueError):
    """Raised when a radius or point lies outside the validity range of a formula."""


@dataclass(frozen=True)
class ModelManifold:
    kind: str
    dim: int
    curvature: float = 0.0
    injectivity_radius: float = math.inf
    sphere_dim: int | None = None

    @property
    def sqrt_k(self) -> float:
        return math.sqrt(self.curvature)

    @property
    def is_compact(self) -> bool:
        return self.kind in ("sphere", "circle")

    @property
    def is_radial(self) -> bool:
        """True for the isotropic models where geometry depends on r = d(o, x) only."""
        return self.kind != "cylinder"

    @property
    def ambient_dim(self) -> int:
        if self.kind == "euclidean":
            return self.dim
        if self.kind == "cylinder":
            return self.dim + 1
        return self.dim + 1

    @property
    def label(self) -> str:
        if self.kind == "euclidean":
            return f"R^{self.dim}"
        if self.kind == "cylinder":
            return f"R^{self.dim - self.sphere_dim}xS^{self.sphere_dim}({self.curvature:g})"
        name = {"sphere": "S", "circle": "S", "hyperbolic": "H"}[self.kind]
        return f"{name}^{self.dim}({self.curvature:g})"

    def volume(self) -> float:
        """Total volume (finite for compact models only)."""
        if self.kind == "circle":
            return 2 * math.pi / self.sqrt_k
        if self.kind == "sphere":
            n = self.dim
            return sphere_area(n + 1) * self.curvature ** (-n / 2)
        return math.inf


def fujita_exponent(dim: int) -> float:
    """Critical exponent (N + 2)/N."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    return (dim + 2) / dim


def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n (n = 1 gives 2, two points)."""
    if n < 1:
        raise ValueError("n must be positive")
    return float(2.0 * np.exp(0.5 * n * np.log(np.pi) - gammaln(0.5 * n)))


def make_manifold(kind: str, dim: int, curvature: float = 0.0,
                  sphere_dim: int | None = None) -> ModelManifold:
    """Build a model manifold with its injectivity radius filled in.

    A sphere of dimension 1 is returned as a circle.
    """
    kind = kind.lower()
    if kind not in KINDS:
        raise ValueError(f"unknown manifold kind {kind!r}; expected one of {KINDS}")
    if int(dim) != dim or dim < 1:
        raise ValueError("dim must be a positive integer")
    dim = int(dim)
    curvature = float(curvature)
    if curvature < 0 or not math.isfinite(curvature):
        raise ValueError("curvature scale must be finite and nonnegative")
    if kind == "euclidean":
        if curvature != 0.0:
            raise ValueError("Euclidean space has curvature scale 0")
        return ModelManifold("euclidean", dim, 0.0, math.inf)
    if curvature == 0.0:
        raise ValueError(f"{kind} requires a positive curvature scale")
    if kind == "sphere" and dim == 1:
        kind = "circle"
    if kind == "circle":
        if dim != 1:
            raise ValueError("a circle has dimension 1")
        return ModelManifold("circle", 1, curvature, math.pi / math.sqrt(curvature))
    if kind == "sphere":
        return ModelManifold("sphere", dim, curvature, math.pi / math.sqrt(curvature))
    if kind == "hyperbolic":
        return ModelManifold("hyperbolic", dim, curvature, math.inf)
    # cylinder R^{N-l} x S^l
    if sphere_dim is None or not (1 <= sphere_dim < dim):
        raise ValueError("cylinder needs 1 <= sphere_dim < dim")
    return ModelManifold("cylinder", dim, curvature, math.pi / math.sqrt(curvature),
                         int(sphere_dim))


# ---------------------------------------------------------------- points

def origin(M: ModelManifold) -> np.ndarray:
    """Center of the normal chart."""
    if M.kind == "euclidean":
        return np.zeros(M.dim)
    if M.kind == "cylinder":
        o = np.zeros(M.dim + 1)
        o[M.dim - M.sphere_dim] = 1.0
        return o
    o = np.zeros(M.dim + 1)
    o[0] = 1.0
    return o


def _unit_exp(v: np.ndarray, s: float, kind: str) -> np.ndarray:
    # exponential map at e_0 of the unit sphere (kind="sphere") or hyperboloid
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    t = s * r
    with np.errstate(invalid="ignore", divide="ignore"):
        if kind == "sphere":
            c, sn = np.cos(t), np.where(t > 0, np.sin(t) / np.where(t > 0, t, 1.0), 1.0)
        else:
            c, sn = np.cosh(t), np.where(t > 0, np.sinh(t) / np.where(t > 0, t, 1.0), 1.0)
    return np.concatenate([c, sn * s * v], axis=-1)


def exp_chart(M: ModelManifold, v) -> np.ndarray:
    """Map normal coordinates at :func:`origin` to a point of M."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != M.dim:
        raise ValueError(f"chart coordinates must have length {M.dim}")
    if M.kind == "euclidean":
        return v.copy()
    if M.kind in ("sphere", "circle"):
        return _unit_exp(v, M.sqrt_k, "sphere")
    if M.kind == "hyperbolic":
        return _unit_exp(v, M.sqrt_k, "hyperbolic")
    m = M.dim - M.sphere_dim
    return np.concatenate([v[..., :m], _unit_exp(v[..., m:], M.sqrt_k, "sphere")], axis=-1)


def log_chart(M: ModelManifold, x) -> np.ndarray:
    """Inverse of :func:`exp_chart` inside the injectivity radius."""
    x = np.asarray(x, dtype=float)
    _check_point(M, x)
    if M.kind == "euclidean":
        return x.copy()
    if M.kind == "cylinder":
        m = M.dim - M.sphere_dim
        return np.concatenate([x[..., :m], _unit_log(x[..., m:], M.sqrt_k, "sphere")], axis=-1)
    kind = "hyperbolic" if M.kind == "hyperbolic" else "sphere"
    return _unit_log(x, M.sqrt_k, kind)


def _unit_log(x: np.ndarray, s: float, kind: str) -> np.ndarray:
    c = x[..., :1]
    w = x[..., 1:]
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    if kind == "sphere":
        t = np.arctan2(nw, c)
    else:
        t = np.arcsinh(nw)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(nw > 0, t / np.where(nw > 0, nw, 1.0), 1.0)
    return scale * w / s


def _check_point(M: ModelManifold, x: np.ndarray) -> None:
    if x.shape[-1] != M.ambient_dim:
        raise ValueError(f"chart mismatch: {M.label} points have {M.ambient_dim} coordinates, "
                         f"got {x.shape[-1]}")


def point_at_distance(M: ModelManifold, d, direction: Sequence[float] | None = None) -> np.ndarray:
    """Point at geodesic distance d from the origin along a chart direction."""
    u = np.zeros(M.dim)
    if direction is None:
        u[0] = 1.0
    else:
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
    d = np.asarray(d, dtype=float)
    return exp_chart(M, d[..., None] * u)


def geodesic_distance(M: ModelManifold, x, y) -> np.ndarray | float:
    """Riemannian distance; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_point(M, x)
    _check_point(M, y)
    if M.kind == "euclidean":
        out = np.linalg.norm(x - y, axis=-1)
    elif M.kind in ("sphere", "circle"):
        out = _sphere_angle(x, y) / M.sqrt_k
    elif M.kind == "hyperbolic":
        out = _hyperbolic_dist(x, y) / M.sqrt_k
    else:
        m = M.dim - M.sphere_dim
        flat = np.linalg.norm(x[..., :m] - y[..., :m], axis=-1)
        ang = _sphere_angle(x[..., m:], y[..., m:]) / M.sqrt_k
        out = np.hypot(flat, ang)
    return float(out) if np.ndim(out) == 0 else out


def _sphere_angle(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # half-angle form stays accurate for nearly equal and nearly antipodal points
    return 2.0 * np.arctan2(np.linalg.norm(x - y, axis=-1), np.linalg.norm(x + y, axis=-1))


def _hyperbolic_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # -<x,y>_L - 1 = |x - y|_L^2 / 2 with the Minkowski form; use arcsinh form
    diff = x - y
    q = -diff[..., 0] ** 2 + np.sum(diff[..., 1:] ** 2, axis=-1)
    q = np.maximum(q, 0.0)
    return 2.0 * np.arcsinh(0.5 * np.sqrt(q))


# ------------------------------------------------------- radial geometry

def _require_radial(M: ModelManifold) -> None:
    if not M.is_radial:
        raise DomainError(f"{M.label} is not isotropic; radial formulas are unavailable")


def _check_radius(M: ModelManifold, r, allow_zero: bool = False) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    low_bad = (r < 0) if allow_zero else (r <= 0)
    if np.any(low_bad) or np.any(r >= M.injectivity_radius) or np.any(~np.isfinite(r)):
        raise DomainError(f"radius outside the normal chart (0, {M.injectivity_radius:g})")
    return r


def sn(M: ModelManifold, r) -> np.ndarray:
    """Jacobi field length: r, sin(sqrt(k) r)/sqrt(k) or sinh(sqrt(k) r)/sqrt(k)."""
    r = np.asarray(r, dtype=float)
    if M.kind == "euclidean":
        return r
    s = M.sqrt_k
    if M.kind in ("sphere", "circle"):
        return np.sin(s * r) / s
    return np.sinh(s * r) / s


def radial_weight(M: ModelManifold, r) -> np.ndarray:
    """Area of the geodesic sphere of radius r; r = 0 is allowed here."""
    _require_radial(M)
    r = np.asarray(r, dtype=float)
    if M.dim == 1:
        return np.full_like(r, 2.0)
    return sphere_area(M.dim) * sn(M, r) ** (M.dim - 1)


def volume_density(M: ModelManifold, r):
    """sqrt(det g) at radius r in normal coordinates."""
    _require_radial(M)
    r = _check_radius(M, r)
    out = (sn(M, r) / r) ** (M.dim - 1)
    return float(out) if out.ndim == 0 else out


def laplacian_distance(M: ModelManifold, r):
    """Laplacian of the distance function from a point, at radius r."""
    _require_radial(M)
    r = _check_radius(M, r)
    n1 = M.dim - 1
    if n1 == 0:
        out = np.zeros_like(r)
    elif M.kind == "euclidean":
        out = n1 / r
    elif M.kind == "sphere":
        s = M.sqrt_k
        out = n1 * s / np.tan(s * r)
    else:
        s = M.sqrt_k
        out = n1 * s / np.tanh(s * r)
    return float(out) if out.ndim == 0 else out


def _ball_volume_closed(M: ModelManifold, r: np.ndarray) -> np.ndarray | None:
    n = M.dim
    if n == 1:
        return 2.0 * r
    if M.kind == "euclidean":
        return sphere_area(n) * r ** n / n
    s, k = M.sqrt_k, M.curvature
    t = s * r
    if n == 2:
        if M.kind == "sphere":
            return 2 * math.pi * (2 * np.sin(t / 2) ** 2) / k
        return 2 * math.pi * (2 * np.sinh(t / 2) ** 2) / k
    if n == 3:
        if M.kind == "sphere":
            return 2 * math.pi * (t - np.sin(t) * np.cos(t)) / s ** 3
        return 2 * math.pi * (np.sinh(t) * np.cosh(t) - t) / s ** 3
    return None


def ball_volume_quad(M: ModelManifold, r: float, rtol: float = 1e-10) -> float:
    """Ball volume by adaptive quadrature of the radial weight."""
    _require_radial(M)
    r = float(_check_radius(M, r))
    val, _ = integrate.quad(lambda s: float(radial_weight(M, s)), 0.0, r,
                            epsabs=0.0, epsrel=rtol, limit=200)
    return val


def ball_volume(M: ModelManifold, r, method: str = "auto"):
    """Volume of the geodesic ball B(o, r), 0 < r < inj(M)."""
    _require_radial(M)
    r = _check_radius(M, r)
    if method == "auto":
        closed = _ball_volume_closed(M, r)
        if closed is not None:
            return float(closed) if closed.ndim == 0 else closed
    elif method != "quad":
        raise ValueError("method must be 'auto' or 'quad'")
    out = np.vectorize(lambda s: ball_volume_quad(M, s))(r)
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------ threshold radii

@dataclass(frozen=True)
class ThresholdRadii:
    rho_T: float
    rho_inf: float


def comparison_radius(M: ModelManifold) -> float:
    """pi/(4 sqrt(kappa)), read as +inf when kappa = 0 or N = 1."""
    if M.curvature == 0.0 or M.dim == 1:
        return math.inf
    return math.pi / (4.0 * M.sqrt_k)


def threshold_radii(M: ModelManifold, T: float = math.inf) -> ThresholdRadii:
    """Radii min{sqrt(T), inj/4, pi/(4 sqrt k)} and the same without sqrt(T)."""
    if not T > 0:
        raise ValueError("T must be positive")
    rho_inf = min(M.injectivity_radius / 4.0, comparison_radius(M))
    return ThresholdRadii(min(math.sqrt(T), rho_inf), rho_inf)


# --------------------------------------------------- comparison report

@dataclass
class BoundRow:
    r: float
    bound_name: str
    lhs: float
    rhs: float
    valid: bool = True

    @property
    def passed(self) -> bool:
        return bool(self.valid and self.lhs <= self.rhs)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass
class ComparisonReport:
    manifold: ModelManifold
    rows: list[BoundRow] = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[BoundRow]:
        return [r for r in self.rows if not r.passed]

    def to_csv(self, path) -> None:
        write_csv(path, ["r", "bound_name", "lhs", "rhs", "pass", "slack", "valid"],
                  [[r.r, r.bound_name, r.lhs, r.rhs, int(r.passed), r.slack, int(r.valid)]
                   for r in self.rows])


def comparison_report(M: ModelManifold, r_samples: Iterable[float], seed: int = 0,
                      pairs_per_radius: int = 4) -> ComparisonReport:
    """Check the Laplacian, density, ball-volume and chart-distance comparisons.

    Each bound is recorded as ``lhs <= rhs``.  Samples outside the stated
    validity range are kept with ``valid=False``.
    """
    _require_radial(M)
    rng = np.random.default_rng(seed)
    n = M.dim
    r_cmp = comparison_radius(M)
    rho_inf = threshold_radii(M).rho_inf
    area = sphere_area(n)
    lo, hi = 2.0 ** (1 - n), 2.0 ** (n - 1)
    rep = ComparisonReport(M)
    for r in map(float, r_samples):
        ok = 0 < r < min(r_cmp, M.injectivity_radius)
        if not ok:
            for name in ("laplacian_upper", "density_lower", "density_upper",
                         "volume_lower", "volume_upper"):
                rep.rows.append(BoundRow(r, name, math.nan, math.nan, valid=False))
        else:
            lap = laplacian_distance(M, r)
            dens = volume_density(M, r)
            vol = ball_volume(M, r)
            eu = area * r ** n / n
            rep.rows += [
                BoundRow(r, "laplacian_upper", lap, 2 * (n - 1) / r),
                BoundRow(r, "density_lower", lo, dens),
                BoundRow(r, "density_upper", dens, hi),
                BoundRow(r, "volume_lower", lo * eu, vol),
                BoundRow(r, "volume_upper", vol, hi * eu),
            ]
        # chart-distance comparison for pairs inside the chart ball of radius rho_inf
        pair_ok = 0 < r < rho_inf
        for _ in range(pairs_per_radius):
            u = rng.normal(size=n)
            u *= r / np.linalg.norm(u)
            w = rng.normal(size=n)
            w *= r * rng.uniform() ** (1.0 / n) / np.linalg.norm(w)
            if not pair_ok:
                rep.rows.append(BoundRow(r, "distance_upper", math.nan, math.nan, valid=False))
                rep.rows.append(BoundRow(r, "distance_lower", math.nan, math.nan, valid=False))
                continue
            d = geodesic_distance(M, exp_chart(M, u), exp_chart(M, w))
            e = float(np.linalg.norm(u - w))
            rep.rows.append(BoundRow(r, "distance_upper", d, 2 * e))
            rep.rows.append(BoundRow(r, "distance_lower", 0.5 * e, d))
    return rep
