"""Heat kernels of the model spaces and numerical checks of their bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate

from .geometry import (DomainError, ModelManifold, exp_chart, geodesic_distance,
                       radial_weight, sphere_area, threshold_radii)
from .io import write_csv

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cached Gauss-Legendre nodes and weights on [-1, 1]."""
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def composite_gl(edges, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite Gauss-Legendre over consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b) + half * x).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def graded_edges(a: float, b: float, h0: float, growth: float = 2.0,
                 both: bool = False) -> np.ndarray:
    """Panel edges on [a, b] starting with width h0 at a and growing geometrically.

    With ``both=True`` the grading is mirrored so that both ends are refined.
    """
    if b <= a:
        return np.array([a, b])
    if both:
        mid = 0.5 * (a + b)
        left = graded_edges(a, mid, h0, growth)
        right = a + b - left[::-1]
        return np.concatenate([left, right[1:]])
    edges = [a]
    h = h0
    while edges[-1] + h < b:
        edges.append(edges[-1] + h)
        h *= growth
    if len(edges) > 1 and b - edges[-1] < 0.25 * (edges[-1] - edges[-2]):
        edges[-1] = b
    else:
        edges.append(b)
    return np.asarray(edges)


@dataclass(frozen=True)
class HeatKernel:
    """Heat kernel K(x, y, t) of a model manifold.

    Parameters
    ----------
    manifold : ModelManifold
    max_terms : int
        Cap on the eigenfunction series length (spheres).
    tail_tol : float
        Series truncation threshold for (2l+1) exp(-l(l+N-1)t).
    small_time_switch : float
        Below this (curvature-scaled) time spheres use a Gaussian parametrix.
    quad_order : int
        Gauss-Legendre order for the two-dimensional hyperbolic integral.
    image_time_switch : float
        On S^2 and S^3 the exact image-type formulas replace the series below
        this time; they keep full relative accuracy far from the diagonal.
    """
    manifold: ModelManifold
    max_terms: int = 4000
    tail_tol: float = 1e-16
    small_time_switch: float = 1e-3
    quad_order: int = 80
    image_time_switch: float = 0.25

    def __post_init__(self):
        M = self.manifold
        if self.tail_tol <= 0:
            raise ValueError("tail_tol must be positive")
        if M.kind == "hyperbolic" and M.dim not in (2, 3):
            raise NotImplementedError(f"heat kernel on {M.label} is not implemented "
                                      "(hyperbolic spaces of dimension 2 and 3 only)")

    @property
    def dim(self) -> int:
        return self.manifold.dim

    # ------------------------------------------------------------ evaluation
    def radial(self, d, t: float) -> np.ndarray:
        """K as a function of the distance d for isotropic models."""
        return np.exp(self.log_radial(d, t))

    def log_radial(self, d, t: float) -> np.ndarray:
        """log K(d, t); stays finite where K itself underflows."""
        if not t > 0:
            raise ValueError("t must be positive")
        M = self.manifold
        d = np.abs(np.asarray(d, dtype=float))
        if M.kind == "euclidean":
            return -0.5 * M.dim * math.log(4 * math.pi * t) - d * d / (4 * t)
        if M.kind == "circle":
            return _circle_log_kernel(d, t, 2 * math.pi / M.sqrt_k)
        if M.kind == "cylinder":
            raise DomainError("the cylinder kernel is not radial; call with points")
        k, s = M.curvature, M.sqrt_k
        theta, tau = s * d, k * t
        if M.kind == "sphere":
            val = self._sphere_log_unit(theta, tau)
        elif M.dim == 2:
            val = _hyperbolic2_log_unit(theta, tau, self.quad_order)
        else:
            val = _hyperbolic3_log_unit(theta, tau)
        return 0.5 * M.dim * math.log(k) + val

    def _sphere_log_unit(self, theta: np.ndarray, tau: float) -> np.ndarray:
        n = self.dim
        theta = np.clip(theta, 0.0, math.pi)
        if n in (2, 3) and tau < self.image_time_switch:
            return _sphere2_log_image(theta, tau) if n == 2 else _sphere3_log_image(theta, tau)
        if tau < self.small_time_switch:
            return _sphere_log_parametrix(theta, tau, n)
        lmax = self.series_terms(tau / self.manifold.curvature)
        if lmax > self.max_terms:
            raise RuntimeError("sphere series did not reach tail_tol within max_terms")
        val = _sphere_series(theta, tau, n, lmax)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(val)
        bad = ~(val > 1e-14 * np.max(np.abs(val)))
        if np.any(bad):
            # series cancellation: fall back to the parametrix for the tiny values
            out = np.where(bad, _sphere_log_parametrix(theta, tau, n), out)
        return out

    def series_terms(self, t: float) -> int:
        """Number of series terms used at time t (spheres only)."""
        M = self.manifold
        tau = M.curvature * t
        lmax = 0
        while (2 * lmax + 1) * math.exp(-lmax * (lmax + M.dim - 1) * tau) >= self.tail_tol:
            lmax += 1
        return lmax

    def __call__(self, x, y, t: float) -> np.ndarray | float:
        M = self.manifold
        if M.kind == "cylinder":
            m = M.dim - M.sphere_dim
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            flat = np.linalg.norm(x[..., :m] - y[..., :m], axis=-1)
            from .geometry import make_manifold
            sph = HeatKernel(make_manifold("sphere", M.sphere_dim, M.curvature),
                             self.max_terms, self.tail_tol, self.small_time_switch)
            ang = geodesic_distance(sph.manifold, x[..., m:], y[..., m:])
            out = (4 * math.pi * t) ** (-m / 2) * np.exp(-flat ** 2 / (4 * t)) * sph.radial(ang, t)
        else:
            out = self.radial(geodesic_distance(M, x, y), t)
        return float(out) if np.ndim(out) == 0 else out


def kernel_eval(E: HeatKernel, x, y, t: float):
    """K(x, y, t)."""
    return E(x, y, t)


def _circle_log_kernel(d: np.ndarray, t: float, L: float) -> np.ndarray:
    d = np.mod(d, L)
    d = np.minimum(d, L - d)
    if t < L * L:
        kmax = int(math.ceil(math.sqrt(4 * t * 45.0) / L)) + 1
        k = np.arange(-kmax, kmax + 1)
        z = d[..., None] + k * L
        rel = np.sum(np.exp(-(z * z - (d * d)[..., None]) / (4 * t)), axis=-1)
        return -0.5 * math.log(4 * math.pi * t) - d * d / (4 * t) + np.log(rel)
    # Fourier series converges fast for large t
    kmax = int(math.ceil(math.sqrt(45.0 / t) * L / (2 * math.pi))) + 2
    k = np.arange(1, kmax + 1)
    lam = (2 * math.pi * k / L) ** 2
    val = 1.0 + 2.0 * np.sum(np.exp(-lam * t) * np.cos(2 * math.pi * k * d[..., None] / L), axis=-1)
    return np.log(val / L)


def _sphere_series(theta: np.ndarray, tau: float, n: int, lmax: int) -> np.ndarray:
    # sum_l (2l+n-1)/((n-1) Vol) exp(-l(l+n-1)tau) C_l^lam(cos theta)
    lam = 0.5 * (n - 1)
    vol = sphere_area(n + 1)
    x = np.cos(theta)
    c_prev = np.ones_like(x)
    total = (n - 1) * c_prev / (n - 1)
    if lmax >= 1:
        c_cur = 2 * lam * x
        total = total + (n + 1) / (n - 1) * math.exp(-n * tau) * c_cur
        for l in range(2, lmax + 1):
            c_next = (2 * x * (l + lam - 1) * c_cur - (l + 2 * lam - 2) * c_prev) / l
            c_prev, c_cur = c_cur, c_next
            total = total + (2 * l + n - 1) / (n - 1) * math.exp(-l * (l + n - 1) * tau) * c_cur
    return total / vol


def _sphere_log_parametrix(theta: np.ndarray, tau: float, n: int) -> np.ndarray:
    # leading Gaussian term with the van Vleck factor and the on-diagonal curvature correction
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(theta > 1e-12, theta / np.sin(np.maximum(theta, 1e-300)), 1.0)
    return (-0.5 * n * math.log(4 * math.pi * tau) + 0.5 * (n - 1) * np.log(ratio)
            - theta ** 2 / (4 * tau) + n * (n - 1) / 6 * tau)


def _sphere3_log_image(theta: np.ndarray, tau: float) -> np.ndarray:
    """Exact image sum on the unit 3-sphere, in log form."""
    k = np.array([-2, -1, 0, 1, 2])
    z = theta[..., None] + 2 * math.pi * k
    t2 = (theta * theta)[..., None]
    e = np.exp(-(z * z - t2) / (4 * tau))
    st = np.sin(theta)
    near_pi = (math.pi - theta) < 1e-4
    near_0 = theta < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        num = np.sum(z * e, axis=-1) / np.where(near_pi | near_0, 1.0, st)
        # limit at the antipode: derivative of the image sum over cos(theta) = -1
        deriv = -np.sum(e * (1 - z * z / (2 * tau)), axis=-1)
    val = np.where(near_pi, deriv, np.where(near_0, 1.0, num))
    return -1.5 * math.log(4 * math.pi * tau) + tau - theta ** 2 / (4 * tau) + np.log(val)


def _sphere2_log_image(theta: np.ndarray, tau: float) -> np.ndarray:
    """Exact integral image formula on the unit 2-sphere, in log form.

    K = sqrt(2) e^{tau/4} (4 pi tau)^{-3/2} sum_k (-1)^k
        int_theta^pi (phi + 2 pi k) e^{-(phi + 2 pi k)^2/(4 tau)} (cos theta - cos phi)^{-1/2} dphi,
    with phi = theta + (pi - theta) sin^2(psi) to absorb both endpoint singularities.
    """
    theta = np.asarray(theta, dtype=float)
    flat = theta.ravel()
    if flat.size > 2048:
        out = np.concatenate([_sphere2_log_image(flat[i:i + 2048], tau)
                              for i in range(0, flat.size, 2048)])
        return out.reshape(theta.shape)
    shape = theta.shape
    th = flat[:, None]
    edges = np.concatenate([[0.0], 0.5 * math.pi * 2.0 ** -np.arange(12, -1, -1)])
    psi, wpsi = composite_gl(edges, 16)
    c = math.pi - th
    sp2 = np.sin(psi) ** 2
    cp2 = np.cos(psi) ** 2
    phi = th + c * sp2
    B = 0.5 * c * sp2
    q = 0.5 * c * (1 + cp2)
    with np.errstate(invalid="ignore", divide="ignore"):
        gB = np.where(B > 1e-12, B / np.sin(np.maximum(B, 1e-300)), 1.0)
        hq = np.where(q > 1e-12, q / np.sin(np.maximum(q, 1e-300)), 1.0)
    jac = 2 * np.cos(psi) * np.sqrt(gB * hq * 2 / (1 + cp2))
    tot = 0.0
    for k in (-1, 0, 1):
        z = phi + 2 * math.pi * k
        tot = tot + (-1) ** k * np.sum(wpsi * z * np.exp(-(z * z - th * th) / (4 * tau)) * jac, axis=-1)
    pref = 0.5 * math.log(2) + tau / 4 - 1.5 * math.log(4 * math.pi * tau)
    out = pref - th[:, 0] ** 2 / (4 * tau) + np.log(tot)
    return out.reshape(shape)


def _hyperbolic3_log_unit(theta: np.ndarray, tau: float) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        # log(theta/sinh theta) without overflow
        lr = np.where(theta > 1e-8, np.log(np.maximum(theta, 1e-300)) - theta
                      - np.log1p(-np.exp(-2 * theta)) + math.log(2), -theta * theta / 6)
    return -1.5 * math.log(4 * math.pi * tau) + lr - tau - theta ** 2 / (4 * tau)


def _hyperbolic2_log_unit(theta: np.ndarray, tau: float, order: int = 80) -> np.ndarray:
    """Integral formula on H^2 with s = theta + u^2 to remove the endpoint singularity."""
    theta = np.asarray(theta, dtype=float)
    flat = theta.ravel()
    if flat.size > 4096:
        out = np.concatenate([_hyperbolic2_log_unit(flat[i:i + 4096], tau, order)
                              for i in range(0, flat.size, 4096)])
        return out.reshape(theta.shape)
    shape = theta.shape
    th = flat[:, None]
    x, w = gauss_legendre(order)
    umax = np.sqrt(np.sqrt(th ** 2 + 4 * tau * 50.0) - th)
    u = 0.5 * umax * (x + 1.0)
    wu = 0.5 * umax * w
    v = 0.5 * u * u
    g = np.where(v > 1e-8, v / np.sinh(np.maximum(v, 1e-300)), 1.0 - v * v / 6)
    s = th + u * u
    expo = -(2 * th * u * u + u ** 4) / (4 * tau)
    # 1/sqrt(sinh(th+v)) in a form that does not overflow for large distances
    w_ = th + v
    inv_sqrt_sinh = np.exp(-0.5 * w_ + 0.5 * math.log(2) - 0.5 * np.log1p(-np.exp(-2 * w_)))
    integrand = 2.0 * s * np.exp(expo + 0.5 * th - 0.5 * 0) * np.sqrt(g) * inv_sqrt_sinh
    integral = np.sum(wu * integrand, axis=-1)
    pref = 0.5 * math.log(2.0) - tau / 4 - 1.5 * math.log(4 * math.pi * tau)
    out = pref - th[:, 0] ** 2 / (4 * tau) - 0.5 * th[:, 0] + np.log(integral)
    return out.reshape(shape)


def hyperbolic2_reference(d: float, t: float) -> float:
    """Independent evaluation of the H^2 kernel (kappa = 1) with adaptive quadrature."""
    from scipy import integrate

    def f(s):
        # s e^{-s^2/4t} sqrt((s - d)/(cosh s - cosh d)); the (s-d)^{-1/2} goes into the weight
        h = s - d
        q = h / (2 * math.sinh(0.5 * (s + d)) * math.sinh(0.5 * h)) if h > 0 else 1 / math.sinh(d) if d > 0 else 0.0
        return s * math.exp(-s * s / (4 * t)) * math.sqrt(q)

    upper = d + math.sqrt(4 * t * 60.0) + 1.0
    val, _ = integrate.quad(f, d, upper, weight="alg", wvar=(-0.5, 0.0),
                            epsabs=0, epsrel=1e-12, limit=400)
    return math.sqrt(2) * math.exp(-t / 4) / (4 * math.pi * t) ** 1.5 * val


# ----------------------------------------------------------- quadrature

def radial_cutoff(M: ModelManifold, t: float) -> float:
    """Radius beyond which K(., t) times the sphere area is negligible."""
    if M.is_compact:
        return M.injectivity_radius
    drift = 2 * (M.dim - 1) * M.sqrt_k * t
    return drift + math.sqrt(4 * t * 46.0) + 1e-12


def radial_rule(M: ModelManifold, t: float, order: int = 16,
                rmax: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule in r on [0, rmax] with volume weights."""
    R = radial_cutoff(M, t) if rmax is None else rmax
    h = min(0.5 * math.sqrt(t), R / 8)
    npan = max(8, int(math.ceil(R / h)))
    r, w = composite_gl(np.linspace(0.0, R, npan + 1), order)
    return r, w * radial_weight(M, r)


def kernel_mass(E: HeatKernel, t: float, x=None) -> float:
    """Integral of K(x, ., t) over M (radial quadrature about x)."""
    r, w = radial_rule(E.manifold, t)
    return float(np.sum(w * E.radial(r, t)))


def _law_of_cosines(M: ModelManifold, r, d0: float, theta) -> np.ndarray:
    # distance between z (distance r from x, angle theta from the x->y direction) and y
    s2 = np.sin(0.5 * theta) ** 2
    if M.kind == "euclidean":
        return np.sqrt((r - d0) ** 2 + 4 * r * d0 * s2)
    s = M.sqrt_k
    a, b = s * r, s * d0
    if M.kind == "sphere":
        X = np.sin(0.5 * (a - b)) ** 2 + np.sin(a) * np.sin(b) * s2
        return 2 * np.arcsin(np.sqrt(np.clip(X, 0.0, 1.0))) / s
    X = np.sinh(0.5 * (a - b)) ** 2 + np.sinh(a) * np.sinh(b) * s2
    return 2 * np.arcsinh(np.sqrt(np.maximum(X, 0.0))) / s


def radial_table(E: HeatKernel, t: float, dmax: float, n: int = 4097):
    """Cubic-spline table of K(d, t) on [0, dmax] for large batches of distances.

    The spline interpolates log K + d^2/(4t), which is smooth and slowly varying.
    """
    d = np.linspace(0.0, dmax, n)
    g = E.log_radial(d, t) + d * d / (4 * t)
    spl = interpolate.CubicSpline(d, g)
    return lambda x: np.exp(spl(np.asarray(x, float)) - np.asarray(x, float) ** 2 / (4 * t))


def convolve_radial(E: HeatKernel, d0: float, s: float, t: float, order: int = 16) -> float:
    """Integral of K(x,z,s) K(z,y,t) dV(z) with d(x,y) = d0."""
    M = E.manifold
    tm = min(s, t)
    if M.is_compact:
        R = M.injectivity_radius
    else:
        R = d0 + radial_cutoff(M, max(s, t))
    h = min(0.35 * math.sqrt(tm), R / 8)
    npan = max(8, int(math.ceil(R / h)))
    r, wr = composite_gl(np.linspace(0.0, R, npan + 1), order)
    ks = E.radial(r, s)
    if M.dim == 1:
        if M.kind == "circle":
            L = 2 * math.pi / M.sqrt_k
            def cdist(z):
                z = np.mod(z, L)
                return np.minimum(z, L - z)
            d1, d2 = cdist(r - d0), cdist(r + d0)
        else:
            d1, d2 = np.abs(r - d0), r + d0
        return float(np.sum(wr * ks * (E.radial(d1, t) + E.radial(d2, t))))
    # angular rule graded toward theta = 0 where the integrand concentrates
    edges = np.concatenate([[0.0], math.pi * 2.0 ** -np.arange(14, -1, -1)])
    edges = np.unique(np.concatenate([edges, np.linspace(math.pi / 2, math.pi, 5)]))
    th, wth = composite_gl(edges, order)
    wth = wth * sphere_area(M.dim - 1) * np.sin(th) ** (M.dim - 2)
    dz = _law_of_cosines(M, r[:, None], d0, th[None, :])
    kt = radial_table(E, t, float(np.max(dz)))(dz) if dz.size > 20000 else E.radial(dz, t)
    inner = kt @ wth
    from .geometry import sn
    vol = sn(M, r) ** (M.dim - 1)
    return float(np.sum(wr * vol * ks * inner))


def semigroup_defect(E: HeatKernel, x, y, s: float, t: float, relative: bool = True) -> float:
    """|K(x,y,s+t) - int K(x,z,s) K(z,y,t) dV(z)|, divided by K(x,y,s+t) if relative."""
    if not (s > 0 and t > 0):
        raise ValueError("s and t must be positive")
    d0 = geodesic_distance(E.manifold, x, y)
    exact = float(E.radial(d0, s + t))
    conv = convolve_radial(E, float(d0), s, t)
    err = abs(exact - conv)
    return err / exact if relative else err


# ------------------------------------------------------- bound checks

@dataclass
class KernelBoundReport:
    bound_id: str
    rows: list[tuple] = field(default_factory=list)   # (d, t, lhs, rhs, ratio)

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r[4] for r in self.rows])

    def sup(self) -> float:
        return float(np.max(self.ratios))

    def inf(self) -> float:
        return float(np.min(self.ratios))

    def to_csv(self, path) -> None:
        write_csv(path, ["bound_id", "d", "t", "lhs", "rhs", "ratio"],
                  [[self.bound_id, *r] for r in self.rows])


def harnack_ratio(E: HeatKernel, x, y, z, t: float) -> float:
    """K(x,y,t)/K(x,z,2t) under d(y,z) <= sqrt(t)."""
    M = E.manifold
    if geodesic_distance(M, y, z) > math.sqrt(t) * (1 + 1e-12):
        raise DomainError("harnack_ratio needs d(y,z) <= sqrt(t)")
    if M.curvature > 0 and t >= math.pi ** 2 / M.curvature:
        raise DomainError("harnack_ratio needs t < pi^2/kappa")
    return float(E(x, y, t) / E(x, z, 2 * t))


def harnack_bound(dim: int) -> float:
    """Closed-form Euclidean constant 2^{3N/4} e^{3/8}."""
    return 2 ** (0.75 * dim) * math.exp(0.375)


def harnack_sweep(E: HeatKernel, t_values, n: int = 10) -> KernelBoundReport:
    """K(x,y,t)/K(x,z,2t) over an n x n x n grid of configurations.

    x is the chart origin, y sits at distance a along e_1 with a in [0, 3 sqrt t],
    z = exp(y' + c sqrt(t) w) with c in [0, 1] and w a unit vector at angle phi.
    """
    M = E.manifold
    rep = KernelBoundReport("harnack")
    x = exp_chart(M, np.zeros(M.dim))
    for t in t_values:
        st = math.sqrt(t)
        a_vals = np.linspace(0.0, 3.0 * st, n)
        if M.is_compact:
            a_vals = np.minimum(a_vals, 0.9 * M.injectivity_radius - st)
        c_vals = np.linspace(0.0, 1.0, n)
        phis = np.linspace(0.0, math.pi, n) if M.dim > 1 else np.array([0.0, math.pi])
        for a in a_vals:
            yv = np.zeros(M.dim)
            yv[0] = a
            y = exp_chart(M, yv)
            for c in c_vals:
                for phi in phis:
                    zv = yv.copy()
                    zv[0] += c * st * math.cos(phi)
                    if M.dim > 1:
                        zv[1] += c * st * math.sin(phi)
                    z = exp_chart(M, zv)
                    dyz = geodesic_distance(M, y, z)
                    if dyz > st:  # chart distortion on curved models
                        z = exp_chart(M, yv + (zv - yv) * (st / dyz) * (1 - 1e-12))
                    num = float(E(x, y, t))
                    den = float(E(x, z, 2 * t))
                    rep.rows.append((a, t, num, den, num / den))
    return rep


def gaussian_bounds_check(E: HeatKernel, x, y, t: float, T_horizon: float,
                          C_upper: float, c_lower: float) -> dict:
    """Compare K with C t^{-N/2} e^{-d^2/(4.5t)} and c t^{-N/2} e^{-d^2/(2t)}."""
    M = E.manifold
    if not 0 < t < T_horizon:
        raise DomainError("gaussian_bounds_check needs 0 < t < T_horizon")
    d = float(geodesic_distance(M, x, y))
    n = M.dim
    lk = float(E.log_radial(d, t)) if M.is_radial else math.log(E(x, y, t))
    K = math.exp(lk)
    upper_valid = math.sqrt(t) < _upper_time_limit(M)
    upper_ratio = _exp_sat(lk + 0.5 * n * math.log(t) + d * d / (4.5 * t))
    lower_ratio = _exp_sat(lk + 0.5 * n * math.log(t) + d * d / (2 * t))
    return {
        "d": d, "t": t, "K": K,
        "upper_ratio": upper_ratio, "lower_ratio": lower_ratio,
        "upper_ok": bool(upper_valid and upper_ratio <= C_upper),
        "upper_valid": bool(upper_valid),
        "lower_ok": bool(lower_ratio >= c_lower),
    }


def _exp_sat(x: float) -> float:
    return math.inf if x > 709.0 else math.exp(x)


def _upper_time_limit(M: ModelManifold) -> float:
    # sqrt(t) < min{inj(M), pi/(4 sqrt k)}, the last term dropped for N = 1 or k = 0
    from .geometry import comparison_radius
    return min(M.injectivity_radius, comparison_radius(M))


def gaussian_ratio_grid(E: HeatKernel, d_values, t_values) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower Gaussian ratios on a (d, t) grid."""
    n = E.dim
    d = np.asarray(d_values, dtype=float)
    up, lo = [], []
    for t in t_values:
        lk = E.log_radial(d, t) + 0.5 * n * math.log(t)
        up.append(np.exp(lk + d * d / (4.5 * t)))
        with np.errstate(over="ignore"):
            lo.append(np.exp(lk + d * d / (2 * t)))
    return np.array(up), np.array(lo)


def fit_gaussian_constants(E: HeatKernel, T_horizon: float, n_d: int = 40, n_t: int = 24,
                           safety: float = 2.0) -> tuple[float, float]:
    """Fit C (upper) and c (lower) on a calibration grid, with a safety factor.

    The calibration grid uses t log-spaced in [1e-3 T, T) and d up to the
    chart limit (compact models) or 6 sqrt(T).
    """
    M = E.manifold
    ts = np.geomspace(1e-3 * T_horizon, 0.999 * T_horizon, n_t)
    dmax = M.injectivity_radius if M.is_compact else 6 * math.sqrt(T_horizon)
    ds = np.linspace(0.0, dmax, n_d)
    ts_up = ts[np.sqrt(ts) < _upper_time_limit(M)]
    up, _ = gaussian_ratio_grid(E, ds, ts_up) if len(ts_up) else (np.zeros(1), None)
    _, lo = gaussian_ratio_grid(E, ds, ts)
    return float(np.max(up) * safety), float(np.min(lo) / safety)


def scaling_ratio(E: HeatKernel, xi, eta, alpha: float, beta: float, t: float) -> float:
    """K(exp(alpha xi), exp(alpha eta), beta t) / K(exp xi, exp eta, beta t/(9 alpha^2))."""
    M = E.manifold
    if not (0 < alpha <= 1 and beta > 0 and t > 0):
        raise DomainError("scaling_ratio needs 0 < alpha <= 1, beta > 0, t > 0")
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    rho = threshold_radii(M).rho_inf
    if np.linalg.norm(xi) >= rho or np.linalg.norm(eta) >= rho:
        raise DomainError("chart points must lie in the ball of radius rho_inf")
    num = E(exp_chart(M, alpha * xi), exp_chart(M, alpha * eta), beta * t)
    den = E(exp_chart(M, xi), exp_chart(M, eta), beta * t / (9 * alpha ** 2))
    return float(num / den)


def linheat_constant(E: HeatKernel, measure, t_samples, x_samples=None, n_x: int = 9) -> float:
    """sup over samples of [int K(x,y,t) dmu(y)] t^{N/2} / sup_z mu(B(z, sqrt t))."""
    from .measures import sup_ball_mass
    best = 0.0
    for t in t_samples:
        rho_inf = threshold_radii(E.manifold).rho_inf
        if t >= 16 * rho_inf ** 2:
            raise DomainError("linheat_constant needs t < 16 rho_inf^2")
        denom = sup_ball_mass(measure, math.sqrt(t)).value
        if denom <= 0:
            raise ValueError("zero measure: ratio undefined")
        xs = measure.probe_points(n_x) if x_samples is None else x_samples
        for x in xs:
            U = measure.heat_extension(E, x, t)
            best = max(best, U * t ** (E.dim / 2) / denom)
    return best
