"""Separated sets on spheres, maximal packings, half-radius covers and
disjoint-subfamily partitions of ball families on the model manifolds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from .geometry import (DomainError, ModelManifold, exp_chart, geodesic_distance, log_chart,
                       origin)
from .io import write_csv

_TOL = 1e-12


# ------------------------------------------------------------------ charts at a point


def _minkowski(x, y):
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


class PointChart:
    """Normal coordinates at an arbitrary point a, through an isometry taking the origin to a."""

    def __init__(self, M: ModelManifold, a):
        if M.kind == "cylinder":
            raise DomainError("point charts need an isotropic model")
        self.M = M
        self.a = np.asarray(a, float)
        self.o = origin(M)
        self.u = None
        if M.kind in ("sphere", "circle", "hyperbolic"):
            u = self.o - self.a
            if np.linalg.norm(u) > 1e-15:
                self.u = u

    def _iso(self, x):
        # an involution, so it serves in both directions
        x = np.asarray(x, float)
        M = self.M
        if self.u is None:
            return x
        u = self.u
        if M.kind == "hyperbolic":
            return x - (2 * _minkowski(x, u) / _minkowski(u, u))[..., None] * u
        return x - (2 * (x @ u) / (u @ u))[..., None] * u

    def exp(self, v):
        if self.M.kind == "euclidean":
            return self.a + np.asarray(v, float)
        return self._iso(exp_chart(self.M, v))

    def log(self, x):
        if self.M.kind == "euclidean":
            return np.asarray(x, float) - self.a
        return log_chart(self.M, self._iso(x))


def _pairwise(M: ModelManifold, pts: np.ndarray) -> np.ndarray:
    n = len(pts)
    D = np.zeros((n, n))
    for i in range(n):
        D[i] = geodesic_distance(M, pts, pts[i])
    return D


# ------------------------------------------------------------------ Dis


@dataclass
class SeparatedSet:
    dim: int
    w: float
    points: np.ndarray

    @property
    def count(self) -> int:
        return len(self.points)

    def min_distance(self) -> float:
        return float(np.min(pdist(self.points))) if self.count > 1 else math.inf


def _sphere_candidates(N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Candidate points on S^{N-1} in R^N."""
    if N == 1:
        return np.array([[1.0], [-1.0]])[rng.permutation(2)]
    if N == 2:
        # uniform angular grid with a random rotation (contains regular polygons)
        n = max(360, n - n % 360)
        th = rng.uniform(0, 2 * np.pi) + 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    from scipy.special import ndtri
    s = qmc.Sobol(N, scramble=True, seed=rng).random(n)
    g = ndtri(np.clip(s, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    # interleave antipodes so that w = 2 is attainable
    return np.stack([g, -g], axis=1).reshape(-1, N)


def _greedy(cands: np.ndarray, sep: float, dist, chosen: list | None = None) -> list:
    chosen = list(chosen or [])
    for c in cands:
        if not chosen or np.min(dist(np.asarray(chosen), c)) >= sep - _TOL * max(sep, 1.0):
            chosen.append(c)
    return chosen


def dis_greedy(N: int, w: float, restarts: int = 8, n_candidates: int = 1024, seed: int = 0) -> SeparatedSet:
    """Lower estimate of the largest number of points on S^{N-1} with mutual distances >= w."""
    if N < 1 or not 0 < w <= 2:
        raise ValueError("need N >= 1 and 0 < w <= 2")
    rng = np.random.default_rng(seed)
    chord = lambda P, c: np.linalg.norm(P - c, axis=1)
    best = None
    for _ in range(restarts):
        pts = np.asarray(_greedy(_sphere_candidates(N, n_candidates, rng), w, chord))
        if best is None or len(pts) > len(best):
            best = pts
    return SeparatedSet(N, w, best)


# ------------------------------------------------------------------ packings and covers


def packing_radius_limit(M: ModelManifold) -> float:
    """R' = (4/5) min(inj, pi/(2 sqrt k)) for N >= 2, (4/5) inj for N = 1."""
    inj = M.injectivity_radius
    if M.dim == 1:
        return 0.8 * inj
    lim = math.pi / (2 * M.sqrt_k) if M.kind == "sphere" else math.inf
    return 0.8 * min(inj, lim)


def packing_bound(N: int) -> int:
    return 2 ** (2 * N - 2) * 5 ** N


@dataclass
class PackingResult:
    manifold: ModelManifold
    center: np.ndarray
    rho: float
    separation: float
    points: np.ndarray
    coords: np.ndarray
    min_pair_distance: float

    @property
    def count(self) -> int:
        return len(self.points)

    def certificate(self) -> dict:
        D = _pairwise(self.manifold, self.points)
        iu = np.triu_indices(self.count, 1)
        return {"count": self.count, "separation": self.separation,
                "min_pair_distance": float(D[iu].min()) if self.count > 1 else math.inf,
                "ok": bool(self.count <= 1 or D[iu].min() >= self.separation * (1 - 1e-12)),
                "bound": packing_bound(self.manifold.dim)}

    def to_dict(self) -> dict:
        return {"center": self.center, "rho": self.rho, "separation": self.separation,
                "coords": self.coords, "certificate": self.certificate()}


def ball_samples(M: ModelManifold, a, rho: float, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-random points of B(a, rho): (chart coordinates at a, points)."""
    N = M.dim
    chart = PointChart(M, a)
    m = 1 << int(math.ceil(math.log2(max(2, n))))
    out = []
    sob = qmc.Sobol(N, scramble=True, seed=seed)
    while sum(len(o) for o in out) < n:
        v = (2 * sob.random(m) - 1) * rho
        out.append(v[np.linalg.norm(v, axis=1) < rho])
    v = np.concatenate(out)[:n]
    return v, chart.exp(v)


def pac_greedy(M: ModelManifold, a, rho: float, n_candidates: int = 10_000, restarts: int = 8,
               seed: int = 0) -> PackingResult:
    """Greedy maximal subset of B(a, rho) with pairwise distances >= rho / 2."""
    lim = packing_radius_limit(M)
    if not 0 < rho <= lim:
        raise DomainError(f"rho must lie in (0, {lim}]")
    sep = 0.5 * rho
    dist = lambda P, c: np.atleast_1d(geodesic_distance(M, P, c))
    best = None
    for k in range(restarts):
        v, pts = ball_samples(M, a, rho, n_candidates, seed + 7919 * k)
        chosen = _greedy(pts, sep, dist)
        P = np.asarray(chosen)
        if best is None or len(P) > len(best[0]) or (
                len(P) == len(best[0]) and tuple(P.ravel()) < tuple(best[0].ravel())):
            best = (P, PointChart(M, a).log(P))
    P, V = best
    D = _pairwise(M, P)
    iu = np.triu_indices(len(P), 1)
    mpd = float(D[iu].min()) if len(P) > 1 else math.inf
    return PackingResult(M, np.asarray(a, float), rho, sep, P, V, mpd)


@dataclass
class CoverResult:
    packing: PackingResult
    samples: int
    covered: int
    max_gap: float

    @property
    def centers(self) -> np.ndarray:
        return self.packing.points

    @property
    def count(self) -> int:
        return self.packing.count

    def audit_rows(self, pts_dist) -> list:
        return [(i, float(d), int(d < 0.5 * self.packing.rho)) for i, d in enumerate(pts_dist)]


class CoverageError(RuntimeError):
    pass


def half_ball_cover(M: ModelManifold, a, rho: float, n_samples: int = 10_000, seed: int = 0,
                    audit_csv=None) -> CoverResult:
    """Centers b with B(a, rho) inside the union of B(b, rho/2), checked on quasi-random samples.

    The greedy pass runs over the audit samples first, so every sample is either a
    center or within rho/2 of one; a failure means the greedy step is broken.
    """
    lim = packing_radius_limit(M)
    if not 0 < rho < lim:
        raise DomainError(f"rho must lie in (0, {lim})")
    v, pts = ball_samples(M, a, rho, n_samples, seed)
    dist = lambda P, c: np.atleast_1d(geodesic_distance(M, P, c))
    chosen = np.asarray(_greedy(pts, 0.5 * rho, dist))
    D = np.full(len(pts), np.inf)
    for c in chosen:
        D = np.minimum(D, dist(pts, c))
    ok = D < 0.5 * rho
    is_center = np.zeros(len(pts), bool)
    for c in chosen:
        is_center |= np.all(pts == c, axis=1)
    covered = ok | is_center
    if audit_csv is not None:
        write_csv(audit_csv, ["sample", "distance_to_nearest_center", "covered"],
                  [(i, float(d), int(c)) for i, (d, c) in enumerate(zip(D, covered))])
    if not np.all(covered):
        raise CoverageError(f"{int((~covered).sum())} samples not covered")
    Dm = _pairwise(M, chosen)
    iu = np.triu_indices(len(chosen), 1)
    pack = PackingResult(M, np.asarray(a, float), rho, 0.5 * rho, chosen, PointChart(M, a).log(chosen),
                         float(Dm[iu].min()) if len(chosen) > 1 else math.inf)
    return CoverResult(pack, len(pts), int(covered.sum()), float(np.max(D)))


def greedy_is_maximal(pack: PackingResult, test_points: np.ndarray) -> bool:
    """No test point keeps distance >= rho/2 from every selected point."""
    M = pack.manifold
    D = np.full(len(test_points), np.inf)
    for c in pack.points:
        D = np.minimum(D, np.atleast_1d(geodesic_distance(M, test_points, c)))
    return bool(np.all(D < pack.separation))


# ------------------------------------------------------------------ Besicovitch partitions


@dataclass
class BallFamily:
    manifold: ModelManifold
    centers: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, float))
        self.radii = np.atleast_1d(np.asarray(self.radii, float))
        if len(self.centers) != len(self.radii):
            raise ValueError("centers and radii differ in length")
        if np.any(self.radii <= 0):
            raise ValueError("radii must be positive")

    def __len__(self):
        return len(self.radii)


def besicovitch_constant(M: ModelManifold, xi: float) -> float:
    """A = 2 for flat models or N = 1, otherwise 2 sinh(sqrt(k) xi)/(sqrt(k) xi) with k = |curvature|."""
    if M.dim == 1 or M.kind == "euclidean" or M.curvature == 0:
        return 2.0
    t = math.sqrt(abs(M.curvature)) * xi
    return 2 * math.sinh(t) / t


@dataclass
class Partition:
    family: BallFamily
    labels: np.ndarray       # subfamily index, -1 for balls left out by the selection
    bound: int
    zeta: int

    @property
    def count(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subfamilies(self) -> list:
        return [np.nonzero(self.labels == k)[0] for k in range(self.count)]

    def verify_disjoint(self) -> bool:
        F = self.family
        for idx in self.subfamilies():
            for i in idx:
                d = np.atleast_1d(geodesic_distance(F.manifold, F.centers[idx], F.centers[i]))
                other = idx != i
                if np.any(d[other] <= F.radii[idx][other] + F.radii[i]):
                    return False
        return True

    def covers_centers(self) -> bool:
        """Every center of the family lies in some selected ball."""
        F = self.family
        sel = np.nonzero(self.labels >= 0)[0]
        for i in range(len(F)):
            d = np.atleast_1d(geodesic_distance(F.manifold, F.centers[sel], F.centers[i]))
            if not np.any(d <= F.radii[sel]):
                return False
        return True

    def to_rows(self) -> list:
        F = self.family
        return [(i, *F.centers[i].tolist(), float(F.radii[i]), int(self.labels[i])) for i in range(len(F))]


def besicovitch_partition(M: ModelManifold, F: BallFamily, xi: float, eta: float = 1.0 / 3,
                          select: bool = True, seed: int = 0) -> Partition:
    """Disjoint subfamilies whose union covers every center of F.

    Balls are processed by decreasing radius (ties by center coordinates).  With
    ``select`` a ball is kept only when its center is not already inside a kept
    ball; kept balls are then coloured greedily, each going to the first
    subfamily it does not meet.  Without ``select`` every ball is coloured.
    """
    if not xi < M.injectivity_radius / 2:
        raise DomainError("xi must be below inj/2")
    if np.any(F.radii >= xi / 2):
        raise DomainError("every radius must be below xi/2")
    if not 0 < eta <= 1.0 / 3:
        raise ValueError("eta must lie in (0, 1/3]")
    keys = [tuple(c) for c in F.centers]
    order = sorted(range(len(F)), key=lambda i: (-F.radii[i], keys[i]))
    labels = np.full(len(F), -1)
    kept: list[int] = []
    members: list[list[int]] = []
    for i in order:
        if select and kept:
            d = np.atleast_1d(geodesic_distance(M, F.centers[kept], F.centers[i]))
            if np.any(d <= F.radii[kept]):
                continue
        kept.append(i)
        for k, mem in enumerate(members):
            d = np.atleast_1d(geodesic_distance(M, F.centers[mem], F.centers[i]))
            if np.all(d > F.radii[mem] + F.radii[i]):
                mem.append(i)
                labels[i] = k
                break
        else:
            members.append([i])
            labels[i] = len(members) - 1
    A = besicovitch_constant(M, xi)
    zeta = dis_greedy(M.dim, min(2.0, eta / A), seed=seed).count
    return Partition(F, labels, 2 * zeta + 1, zeta)


def random_family(M: ModelManifold, n: int, r_lo: float, r_hi: float, spread: float, seed: int = 0) -> BallFamily:
    rng = np.random.default_rng(seed)
    v = rng.uniform(-spread, spread, size=(n, M.dim))
    return BallFamily(M, exp_chart(M, v), rng.uniform(r_lo, r_hi, size=n))


# ------------------------------------------------------------------ width


def width_eval(M: ModelManifold, a, b, c) -> float:
    """d(x, c)/d(a, c) for x on the geodesic from a toward b with d(a, x) = d(a, c)."""
    a, b, c = (np.asarray(z, float) for z in (a, b, c))
    dab = float(geodesic_distance(M, a, b))
    dac = float(geodesic_distance(M, a, c))
    if not (dab > 0 and dac > 0):
        raise DomainError("b and c must differ from a")
    if dab < dac * (1 - 1e-12):
        raise DomainError("need d(a, b) >= d(a, c)")
    chart = PointChart(M, a)
    vb = chart.log(b)
    x = chart.exp(dac * vb / np.linalg.norm(vb))
    return float(geodesic_distance(M, x, c)) / dac
