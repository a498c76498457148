"""Morrey-type norm, a fractional maximal operator over off-center boxes,
and the ratio ||H f_n||_p / ||f_n||_Y for the Cantor data f_n.

For Cantor data at the critical exponent the level lengths reach 1e-44000, so
the Cantor computations never form positions.  Every length is a logarithm,
and a distance between two clusters is written as R_{q-1} times a factor of
order one, where q is the first address digit in which they differ.

Sampled suprema are lower bounds of the true suprema.  In ``ratio_curve`` the
maximal function is evaluated over whole-cluster windows and partial
captures of the nearest leaf, so the numerator is a lower bound.  The
denominator is the supremum over windows spanning aligned runs of leaves
plus a partial leaf on one end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .cantor import CantorSet, cantor_levels, log_phi_of_log, phi_log
from .geometry import DomainError, ModelManifold, fujita_exponent, make_manifold, threshold_radii, volume_density
from .heat_kernel import composite_gl, graded_edges
from .io import write_csv
from .measures import RadonMeasure, sup_ball_mass

_LOG2 = math.log(2.0)


# ------------------------------------------------------------------ configs


@dataclass
class MorreyConfig:
    p: float
    manifold: ModelManifold
    n_rho: int = 48
    rho_min: float = 1e-4
    refine: bool = True

    def __post_init__(self):
        if self.p < fujita_exponent(self.manifold.dim) - 1e-12:
            raise ValueError("p must be at least the Fujita exponent")

    @property
    def rho_inf(self) -> float:
        return threshold_radii(self.manifold).rho_inf

    def rho_grid(self) -> np.ndarray:
        hi = min(self.rho_inf, 1.0) * (1 - 1e-9)
        return np.geomspace(self.rho_min, hi, self.n_rho)


@dataclass
class MaximalConfig:
    p: float
    dim: int
    a: float
    rbar: float
    n_grid: int = 48
    rho_min_frac: float = 1e-4

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not 0 < self.rbar < 0.5:
            raise ValueError("rbar must lie in (0, 1/2)")

    @classmethod
    def for_manifold(cls, M: ModelManifold, p: float, rbar: float, **kw) -> "MaximalConfig":
        return cls(p, M.dim, default_a(M), rbar, **kw)

    def axis_grid(self) -> np.ndarray:
        return np.geomspace(self.a * self.rho_min_frac, self.a, self.n_grid)


def default_a(M: ModelManifold) -> float:
    return min(threshold_radii(M).rho_inf, 1.0) / math.sqrt(M.dim)


# ------------------------------------------------------------------ Morrey norm


@dataclass
class MorreyValue:
    value: float
    rho: float
    center: object
    resolution: dict


def morrey_norm(mu: RadonMeasure, cfg: MorreyConfig) -> MorreyValue:
    """Sampled sup of phi(rho)^{-1} rho^{-(N-2/(p-1))} mu(B(x, rho))."""
    N, p = cfg.manifold.dim, cfg.p
    g = N - 2.0 / (p - 1)
    best = MorreyValue(0.0, float("nan"), None, {"n_rho": cfg.n_rho, "rho_min": cfg.rho_min})
    for rho in cfg.rho_grid():
        sm = sup_ball_mass(mu, float(rho), refine=cfg.refine)
        v = sm.value / (phi_log(rho, p) * rho ** g)
        if v > best.value:
            best = MorreyValue(float(v), float(rho), sm.center, best.resolution)
    return best


def interval_morrey_1d(lo: float, hi: float, p: float, rho_grid, centers) -> float:
    """Brute-force oracle: indicator of (lo, hi) on the line, sampled centers and radii."""
    g = 1 - 2.0 / (p - 1)
    rho = np.asarray(rho_grid, float)[:, None]
    x = np.asarray(centers, float)[None, :]
    m = np.clip(np.minimum(x + rho, hi) - np.maximum(x - rho, lo), 0.0, None)
    return float(np.max(m / (phi_log(rho, p) * rho ** g)))


# ------------------------------------------------------------------ maximal operator


def box_mass_from_density(f: Callable, order: int = 16, panels: int = 4) -> Callable:
    """(lo, hi) -> int_box f deta by tensor Gauss-Legendre (f takes an (m, N) array)."""
    def mass(lo, hi):
        lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        rules = [composite_gl(np.linspace(l, h, panels + 1), order) for l, h in zip(lo, hi)]
        grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
        wts = np.ones_like(grids[0])
        for i, r in enumerate(rules):
            shape = [1] * len(rules)
            shape[i] = -1
            wts = wts * r[1].reshape(shape)
        pts = np.stack([g.ravel() for g in grids], axis=1)
        return float(np.sum(wts.ravel() * np.asarray(f(pts), float)))
    return mass


def cantor_box_mass(cantor: CantorSet, n: int, a: float) -> Callable:
    """(lo, hi) -> int_box prod_i chi_{I_n}(eta_i / a) deta, double-precision levels only."""
    left, right = cantor.intervals(n)
    left, right = a * np.asarray(left), a * np.asarray(right)

    def mass(lo, hi):
        out = 1.0
        for l, h in zip(np.atleast_1d(lo), np.atleast_1d(hi)):
            out *= float(np.sum(np.clip(np.minimum(right, h) - np.maximum(left, l), 0.0, None)))
        return out
    return mass


def maximal_eval(box_mass: Callable, xi, cfg: MaximalConfig, grid: np.ndarray | None = None) -> float:
    """sup over sampled P in Q_a of |P|^{-(N - 2/p)} int_{D_P(xi)} f deta.

    D_P(xi) = prod_i (xi_i + (1 - 2 rbar) rho_i, xi_i + rho_i); ``xi`` must lie in Q_a.
    """
    xi = np.atleast_1d(np.asarray(xi, float))
    if len(xi) != cfg.dim or np.any(xi < 0) or np.any(xi > cfg.a):
        raise DomainError("xi must lie in the chart cube Q_a")
    grid = cfg.axis_grid() if grid is None else np.asarray(grid, float)
    s = cfg.dim - 2.0 / cfg.p
    best = 0.0
    for P in np.array(np.meshgrid(*([grid] * cfg.dim), indexing="ij")).reshape(cfg.dim, -1).T:
        m = box_mass(xi + (1 - 2 * cfg.rbar) * P, xi + P)
        if m > 0:
            best = max(best, m * float(np.linalg.norm(P)) ** (-s))
    return best


def nested_grid(cfg: MaximalConfig, level: int) -> np.ndarray:
    """Geometric axis grid with 2^level (n_grid - 1) + 1 points; each level contains the previous."""
    m = (cfg.n_grid - 1) * 2 ** level + 1
    return np.geomspace(cfg.a * cfg.rho_min_frac, cfg.a, m)


def lower_bound_single_cluster(cantor: CantorSet, n: int, j: int, l: int, xi: float, p: float,
                               a: float = 1.0) -> float:
    """Closed-form lower bound for N = 1 at xi in the separated part of the gap below b_{j,l}."""
    R = cantor.levels
    left, right = cantor.intervals(j)
    b = right[l - 1]
    alpha = 1 - 2.0 / p
    return a ** (-1 - alpha) * 2 ** (n - j - 1) * R[n] * (b - xi) ** (-alpha)


# ------------------------------------------------------------------ Cantor hierarchy (log form)


class _Hierarchy:
    """Level structure of the 1-D Cantor set on (0, 1) in log form."""

    def __init__(self, cantor: CantorSet, n: int, rbar: float):
        if n > cantor.n_max:
            raise ValueError("cantor set has too few levels")
        self.n = n
        self.LR = np.asarray(cantor.log_levels[: n + 1], float)     # LR[0] = 0
        self.rbar = rbar
        self.log_feas = math.log((1 - 2 * rbar) / (2 * rbar))
        self.log_leaf_density = -n * _LOG2 - self.LR[n]

    def log_offset(self, c: tuple, ref: tuple, ref_end: bool = False) -> float:
        """log(start(c) - start(ref)), or minus end(ref); -inf when they coincide."""
        LR = self.LR
        L = max(len(c), len(ref))
        dc = list(c) + [0] * (L - len(c))
        dr = list(ref) + [0] * (L - len(ref))
        q0 = next((q for q in range(L) if dc[q] != dr[q]), None)
        if q0 is None:
            if ref_end:
                raise ValueError("cluster does not lie to the right of the reference")
            return -math.inf
        base = LR[q0]                                   # R_{q0} with q0 zero-based = R_{(q0+1)-1}
        s = 0.0
        for q in range(q0, L):
            d = dc[q] - dr[q]
            if d:
                s += d * (math.exp(LR[q] - base) - math.exp(LR[q + 1] - base))
        if ref_end:
            s -= math.exp(LR[len(ref)] - base)
        if s <= 0:
            raise ValueError("cluster does not lie to the right of the reference")
        return base + math.log(s)

    def right_roots(self, path: tuple) -> list:
        """Maximal clusters lying to the right of the cluster with address ``path``."""
        return [path[:q] + (1,) for q in range(len(path)) if path[q] == 0]

    def candidates(self, roots: list, ref: tuple, ref_end: bool) -> list:
        """(logK, logl, level) for clusters to the right, pruning dominated subtrees."""
        out = []
        stack = list(roots)
        prune = 0.5 * (1 - 2 * self.rbar) ** (-self.alpha) < 1
        while stack:
            c = stack.pop()
            lk = self.log_offset(c, ref, ref_end)
            m = len(c)
            ll = self.LR[m]
            out.append((lk, ll, m))
            always = lk >= ll + self.log_feas
            if m < self.n and not (always and prune):
                stack += [c + (0,), c + (1,)]
        return out

    def set_exponent(self, alpha: float) -> None:
        self.alpha = alpha


def _axis_values(H: _Hierarchy, logd: np.ndarray, cands: list, own_leaf: bool):
    """Per node: arrays of candidate (log rho, log mass) for windows to the right.

    ``logd`` is log of the distance to the reference point (start of the nearest
    right cluster, or end of the current leaf).
    """
    n = H.n
    rows_r, rows_m = [], []
    for lk, ll, m in cands:
        lD = np.logaddexp(logd, lk)
        feas = lD >= ll + H.log_feas
        lr = np.logaddexp(lD, ll)
        lm = np.where(feas, -m * _LOG2, -np.inf)
        rows_r.append(np.where(feas, lr, 0.0))
        rows_m.append(lm)
        if m == n:
            # windows inside the leaf with their left end on its start or right end on its end
            lrp = lD - math.log(1 - 2 * H.rbar)
            lmp = H.log_leaf_density + lD + math.log(2 * H.rbar / (1 - 2 * H.rbar))
            rows_r.append(np.where(feas, 0.0, lrp))
            rows_m.append(np.where(feas, -np.inf, lmp))
            rows_r.append(np.where(feas, 0.0, lr))
            rows_m.append(np.where(feas, -np.inf, H.log_leaf_density + math.log(2 * H.rbar) + lr))
    if own_leaf:
        rows_r.append(logd)
        rows_m.append(H.log_leaf_density + math.log(2 * H.rbar) + logd)
    return np.array(rows_r).T, np.array(rows_m).T


def _panels(lo: float, hi: float, breaks, order: int, h0: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule on [lo, hi] in log distance, split at breaks and graded toward every edge."""
    b = np.asarray([x for x in breaks if lo < x < hi], float)
    edges = np.unique(np.concatenate([[lo, hi], b]))
    keep = np.concatenate([[True], np.diff(edges) > 1e-9 * np.maximum(1.0, np.abs(edges[1:]))])
    edges = edges[keep]
    fine = [edges[:1]]
    for a, c in zip(edges[:-1], edges[1:]):
        fine.append(graded_edges(a, c, h0, 2.0, both=True)[1:])
    return composite_gl(np.concatenate(fine), order)


@dataclass
class AxisRule:
    """Quadrature nodes on (0, 1) with per-node candidate windows."""
    x: np.ndarray            # approximate positions (for volume weights)
    logw: np.ndarray         # log quadrature weight (d zeta)
    log_rho: np.ndarray      # (nodes, candidates)
    log_mass: np.ndarray


def _leaf_starts(H: _Hierarchy) -> list:
    return [tuple(int(b) for b in np.binary_repr(i, H.n)) if H.n else () for i in range(2 ** H.n)]


def _approx_start(H: _Hierarchy, path: tuple) -> float:
    R = np.exp(H.LR)
    return float(sum(d * (R[q] - R[q + 1]) for q, d in enumerate(path)))


def axis_rule(cantor: CantorSet, n: int, p: float, N: int = 1, order: int = 8, h0: float = 1.0,
              depth: float = 30.0) -> AxisRule:
    """All gaps and leaves of the level-n set with the candidate windows at each node."""
    H = _Hierarchy(cantor, n, cantor.rbar)
    H.set_exponent(N - 2.0 / p)
    xs, lws, lrs, lms = [], [], [], []
    width = 0

    def add(pos0, sign, logd, lw, cands, own):
        nonlocal width
        lr, lm = _axis_values(H, logd, cands, own)
        xs.append(pos0 + sign * np.exp(logd))
        lws.append(lw + logd)
        lrs.append(lr)
        lms.append(lm)
        width = max(width, lr.shape[1])

    LR = H.LR
    for k in range(n):
        for idx in range(2 ** k):
            path = tuple(int(b) for b in np.binary_repr(idx, k)) if k else ()
            rc = path + (1,)
            roots = [rc] + H.right_roots(path)
            cands = H.candidates(roots, rc, False)
            lgap = LR[k] + math.log1p(-2 * math.exp(LR[k + 1] - LR[k]))
            lo = LR[n] - depth
            brk = [lk for lk, _, _ in cands if np.isfinite(lk)]
            for lk, ll, _ in cands:
                thr = ll + H.log_feas
                if not np.isfinite(lk):
                    brk.append(thr)
                elif thr > lk:
                    brk.append(thr + math.log1p(-math.exp(lk - thr)) if thr - lk > 1e-12 else lk)
            brk += list(LR[k + 1: n + 1])
            u, w = _panels(lo, lgap, brk, order, h0)
            add(_approx_start(H, rc), -1.0, u, np.log(w), cands, False)
    for leaf in _leaf_starts(H):
        cands = H.candidates(H.right_roots(leaf), leaf, True)
        brk = [lk for lk, _, _ in cands] + [ll + H.log_feas for _, ll, _ in cands]
        u, w = _panels(LR[n] - depth, LR[n], brk, order, h0)
        add(_approx_start(H, leaf) + math.exp(LR[n]), -1.0, u, np.log(w), cands, True)
    pad = lambda arr, v: np.pad(arr, ((0, 0), (0, width - arr.shape[1])), constant_values=v)
    return AxisRule(np.concatenate(xs), np.concatenate(lws),
                    np.concatenate([pad(a, 0.0) for a in lrs]),
                    np.concatenate([pad(a, -np.inf) for a in lms]))


def _pareto(lr: np.ndarray, lm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Keep per node only windows not dominated by a smaller window with at least the same mass."""
    key = np.where(np.isfinite(lm), lr, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    lr_s = np.take_along_axis(lr, order, 1)
    lm_s = np.take_along_axis(lm, order, 1)
    prev = np.concatenate([np.full((lm.shape[0], 1), -np.inf),
                           np.maximum.accumulate(lm_s, axis=1)[:, :-1]], axis=1)
    keep = lm_s > prev
    width = max(1, int(keep.sum(axis=1).max()))
    out_r = np.zeros((lr.shape[0], width))
    out_m = np.full((lr.shape[0], width), -np.inf)
    rows, cols = np.nonzero(keep)
    slot = np.cumsum(keep, axis=1)[rows, cols] - 1
    out_r[rows, slot] = lr_s[rows, cols]
    out_m[rows, slot] = lm_s[rows, cols]
    return out_r, out_m


def log_lp_integral(rule: AxisRule, p: float, N: int = 1, M: ModelManifold | None = None,
                    a: float = 1.0) -> float:
    """log of int_{Q_1} H~(zeta)^p w(a zeta) dzeta over the tensor rule."""
    s = N - 2.0 / p
    if N == 1:
        lh = np.max(rule.log_mass - s * rule.log_rho, axis=1)
        return float(logsumexp(p * lh + rule.logw))
    if N != 2:
        raise NotImplementedError("ratio curves are implemented for N <= 2")
    terms = []
    lr, lm = _pareto(rule.log_rho, rule.log_mass)
    chunk = max(1, 4_000_000 // (len(rule.x) * lr.shape[1] ** 2))
    for i in range(0, len(rule.x), chunk):
        lr1, lm1 = lr[i:i + chunk, None, :, None], lm[i:i + chunk, None, :, None]
        lr2, lm2 = lr[None, :, None, :], lm[None, :, None, :]
        val = lm1 + lm2 - 0.5 * s * np.logaddexp(2 * lr1, 2 * lr2)
        lh = np.max(val.reshape(val.shape[0], val.shape[1], -1), axis=2)
        lw = rule.logw[i:i + chunk, None] + rule.logw[None, :]
        if M is not None and M.kind != "euclidean":
            r = a * np.hypot(rule.x[i:i + chunk, None], rule.x[None, :])
            lw = lw + np.log(volume_density(M, r))
        terms.append(logsumexp(p * lh + lw))
    return float(logsumexp(terms))


def log_cantor_morrey(cantor: CantorSet, n: int, p: float, a: float = 1.0, n_partial: int = 48) -> float:
    """log of sup over windows of mass / (phi(rho) rho^gamma), masses normalised to total 1 (N = 1).

    Windows are aligned runs of leaves, optionally extended into part of the next leaf.
    """
    LR = np.asarray(cantor.log_levels[: n + 1], float)
    g = 1 - 2.0 / (p - 1)
    nl = 2 ** n

    def score(lm, lL):
        lrho = math.log(a) + lL - _LOG2
        return lm - log_phi_of_log(lrho, p) - g * lrho

    best = score(-n * _LOG2, LR[n])
    if n == 0:
        return float(best)
    idx = np.arange(nl)
    digits = ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(float)
    # log(start_j - start_i) for i < j
    lsd = np.full((nl, nl), -np.inf)
    x = idx[:, None] ^ idx[None, :]
    first = n - np.floor(np.log2(np.maximum(x, 1))).astype(int) - 1    # zero-based first differing digit
    for q0 in range(n):
        base = LR[q0]
        t = np.zeros(n)
        t[q0:] = np.exp(LR[q0:n] - base) - np.exp(LR[q0 + 1:n + 1] - base)
        S = digits @ t
        sel = (first == q0) & (idx[:, None] < idx[None, :])
        diff = S[None, :] - S[:, None]
        lsd[sel] = base + np.log(diff[sel])
    i, j = np.nonzero(np.triu(np.ones((nl, nl), bool), 1))
    lmass = np.log(j - i + 1.0) - n * _LOG2
    lL = np.logaddexp(lsd[i, j], LR[n])
    lrho = math.log(a) + lL - _LOG2
    best = max(best, float(np.max(lmass - log_phi_of_log(lrho, p) - g * lrho)))
    # partial extension of runs i..j into leaf j+1
    theta = np.geomspace(1e-3, 1.0, n_partial)[:-1]
    ok = j + 1 < nl
    i2, j2 = i[ok], j[ok]
    i2 = np.concatenate([i2, np.arange(nl - 1)])
    j2 = np.concatenate([j2, np.arange(nl - 1)])
    base_m = np.where(j2 >= i2, j2 - i2 + 1.0, 0.0)
    lstart = lsd[i2, j2 + 1]
    for th in theta:
        lm = np.log(base_m + th) - n * _LOG2
        lL = np.logaddexp(lstart, LR[n] + math.log(th))
        lrho = math.log(a) + lL - _LOG2
        best = max(best, float(np.max(lm - log_phi_of_log(lrho, p) - g * lrho)))
    return float(best)


# ------------------------------------------------------------------ curves


def lower_sum(N: int, p: float, n: int, cantor: CantorSet | None = None) -> float:
    """sum_{j<n} phi(R_j)^{p-1}, with the factor log(R_j/R_{j+1}) at the critical exponent."""
    if n <= 0:
        return 0.0
    cantor = cantor or cantor_levels(N, p, n)
    LR = np.asarray(cantor.log_levels[: n + 1], float)
    terms = np.exp((p - 1) * log_phi_of_log(LR[:n], p))
    if abs(p - fujita_exponent(N)) < 1e-12:
        terms = terms * (LR[:n] - LR[1:n + 1])
    return float(np.sum(terms))


def divergence_partial(p: float, k: int) -> float:
    """int_{2^-k}^1 eta^{-1} phi(eta)^{p-1} deta = int_{-k log 2}^0 du / log(e + e^{-u})."""
    if k < 1:
        raise ValueError("k >= 1")
    f = lambda u: 1.0 / (-u + math.log1p(math.exp(1 + u)))
    val, _ = integrate.quad(f, -k * _LOG2, 0.0, limit=200)
    return float(val)


@dataclass
class RatioCurve:
    N: int
    p: float
    n: np.ndarray
    ratio: np.ndarray
    lower_sum: np.ndarray
    log_lp: np.ndarray
    log_morrey: np.ndarray
    meta: dict = field(default_factory=dict)

    def fit(self) -> tuple[float, float]:
        """c from a least-squares slope of ratio^p on lower_sum (n >= 1), C the smallest
        offset making ratio^p >= c lower_sum - C at every n."""
        m = self.n >= 1
        y = self.ratio[m] ** self.p
        x = self.lower_sum[m]
        c = float(np.polyfit(x, y, 1)[0]) if m.sum() >= 2 else float("nan")
        C = float(max(0.0, np.max(c * self.lower_sum - self.ratio ** self.p)))
        return c, C

    def margins(self) -> np.ndarray:
        c, C = self.fit()
        return self.ratio ** self.p - (c * self.lower_sum - C)

    def rows(self) -> list:
        c, C = self.fit()
        return [(int(k), float(r), float(s), c, C) for k, r, s in zip(self.n, self.ratio, self.lower_sum)]

    def to_csv(self, path) -> None:
        write_csv(path, ["n", "ratio", "lower_sum", "fitted_c", "fitted_C"], self.rows())


def ratio_curve(N: int, p: float, n_max: int, M: ModelManifold | None = None, order: int = 8,
                h0: float = 1.0, n_partial: int = 48, cantor: CantorSet | None = None) -> RatioCurve:
    """ratio(n) = ||H f_n||_{L^p(chart cube)} / ||f_n||_Y for n = 0..n_max."""
    if N not in (1, 2):
        raise ValueError("desk-scale ratio curves need N in {1, 2}")
    M = M or make_manifold("euclidean", N)
    if M.dim != N:
        raise ValueError("manifold dimension mismatch")
    cantor = cantor or cantor_levels(N, p, max(n_max, 1))
    a = default_a(M)
    ns = np.arange(n_max + 1)
    llp, lmo, rat, ls = [], [], [], []
    for n in ns:
        rule = axis_rule(cantor, int(n), p, N, order, h0)
        lI = log_lp_integral(rule, p, N, M, a)
        if N == 1:
            lY = log_cantor_morrey(cantor, int(n), p, a, n_partial)
        else:
            lY = _log_morrey_2d(cantor, int(n), p, M, a)
        # ||H||_p = a^{(N+2)/p} m^N I^{1/p}, ||f||_Y = a^N m^N Y~
        lr = (N + 2) / p * math.log(a) + lI / p - N * math.log(a) - lY
        llp.append(lI)
        lmo.append(lY)
        rat.append(math.exp(lr))
        ls.append(lower_sum(N, p, int(n), cantor))
    return RatioCurve(N, p, ns, np.array(rat), np.array(ls), np.array(llp), np.array(lmo),
                      {"order": order, "h0": h0, "n_partial": n_partial, "a": a, "rbar": cantor.rbar,
                       "manifold": M.label})


def _log_morrey_2d(cantor: CantorSet, n: int, p: float, M: ModelManifold, a: float) -> float:
    """Sampled Morrey norm of the product Cantor density, masses normalised to total 1."""
    from .measures import cantor_density
    mu = cantor_density(cantor, n, M, a)
    total = mu.total_mass()
    R = cantor.levels
    radii = sorted({float(a * R[m] * f) for m in range(n + 1) for f in (0.5, 0.75, 1 / math.sqrt(2), 1.0)})
    g = 2 - 2.0 / (p - 1)
    best = -math.inf
    for rho in radii:
        sm = sup_ball_mass(mu, rho)
        if sm.value > 0:
            best = max(best, math.log(sm.value / total) - math.log(phi_log(rho, p)) - g * math.log(rho))
    return best


def fit_stability(coarse: RatioCurve, fine: RatioCurve) -> dict:
    c1, C1 = coarse.fit()
    c2, C2 = fine.fit()
    rel = lambda u, v: abs(u - v) / max(abs(u), abs(v), 1e-300)
    return {"c_coarse": c1, "c_fine": c2, "C_coarse": C1, "C_fine": C2,
            "c_rel_change": rel(c1, c2), "C_rel_change": rel(C1, C2) if max(C1, C2) > 0 else 0.0}
