"""Cantor-type sets built from the log-weighted scaling identity.

Level lengths R_n solve 2^{Nn} R^{N-2/(p-1)} phi(R) = phi(1/2) with
phi(rho) = log(e + 1/rho)^{-1/(p-1)}.  For p = (N+2)/N the exponent
N - 2/(p-1) vanishes and R_n decays doubly exponentially (R_8 ~ 1e-44150 for
N = 1, p = 3), so the roots are found with mpmath in log R and every
quantity is also exposed in log form.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import mpmath
import numpy as np

from .geometry import fujita_exponent

_E = math.e


def phi_log(rho, p: float):
    """(log(e + 1/rho))^{-1/(p-1)}, increasing from 0 (rho -> 0) to 1 (rho -> inf)."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    with np.errstate(divide="ignore", over="ignore"):
        inv = np.where(np.isinf(rho), 0.0, 1.0 / rho)
    out = np.log(_E + inv) ** (-1.0 / (p - 1))
    return float(out) if out.ndim == 0 else out


def log_phi_of_log(u, p: float):
    """log phi(e^u) without forming e^u (valid for u far below -745)."""
    u = np.asarray(u, dtype=float)
    # log(e + e^{-u}) = -u + log1p(e^{1+u}) for u < 0, else 1 + log1p(e^{-u-1})
    L = np.where(u < 0, -u + np.log1p(np.exp(np.minimum(1.0 + u, 1.0))),
                 1.0 + np.log1p(np.exp(-np.abs(u) - 1.0)))
    out = -np.log(L) / (p - 1)
    return float(out) if out.ndim == 0 else out


def _mp_log_phi(u, p):
    # u = log rho as mpf
    L = -u + mpmath.log1p(mpmath.exp(1 + u)) if u < 0 else 1 + mpmath.log1p(mpmath.exp(-u - 1))
    return -mpmath.log(L) / (p - 1)


@dataclass(frozen=True)
class LogWeight:
    """phi(rho) together with the monotonicity exponents alpha and beta.

    alpha = 1/(p-1) makes rho^{-alpha} phi(rho) strictly decreasing because the
    logarithmic derivative of phi is 1/((p-1)(e rho + 1) log(e + 1/rho)) < 1/(p-1).
    beta = (N - 2/(p-1))/2 is the midpoint of the admissible range (p > p_F).
    """
    p: float
    dim: int

    @property
    def gamma(self) -> float:
        return self.dim - 2.0 / (self.p - 1)

    @property
    def alpha(self) -> float:
        return 1.0 / (self.p - 1)

    @property
    def beta(self) -> float | None:
        return 0.5 * self.gamma if self.gamma > 0 else None

    def __call__(self, rho):
        return phi_log(rho, self.p)

    def elasticity(self, rho):
        """d log phi / d log rho."""
        rho = np.asarray(rho, dtype=float)
        return 1.0 / ((self.p - 1) * (_E * rho + 1) * np.log(_E + 1 / rho))

    def monotonicity_report(self, rho) -> dict:
        """Check the four monotonicity bullets on a sorted grid of radii."""
        rho = np.sort(np.asarray(rho, dtype=float))
        lp = np.log(phi_log(rho, self.p))
        lr = np.log(rho)
        out = {
            "phi_increasing": bool(np.all(np.diff(lp) > 0)),
            "power_phi_increasing": bool(np.all(np.diff(self.gamma * lr + lp) > 0))
            if self.gamma > 0 else bool(np.all(np.diff(lp) > 0)),
            "alpha_decreasing": bool(np.all(np.diff(-self.alpha * lr + lp) < 0)),
        }
        if self.beta is not None:
            out["beta_increasing"] = bool(np.all(np.diff(self.beta * lr + lp) > 0))
        return out


def _solve_level(n: int, N: int, p: float, tol: float = 1e-14):
    """Bisection in u = log R for 2^{Nn} R^gamma phi(R) = phi(1/2)."""
    gamma = mpmath.mpf(N) - mpmath.mpf(2) / (p - 1)
    target = _mp_log_phi(mpmath.log(mpmath.mpf(1) / 2), p)
    shift = N * n * mpmath.log(2)

    def g(u):
        return shift + gamma * u + _mp_log_phi(u, p) - target

    hi = mpmath.log(mpmath.mpf(1) / 2)
    if not g(hi) > 0:
        raise ArithmeticError("bracket failure at R = 1/2")
    lo = mpmath.mpf(-1)
    while g(lo) >= 0:
        lo *= 2
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


@dataclass
class CantorSet:
    """Levels, ratios and interval families of the Cantor-type set.

    Intervals are encoded exactly by their binary address: the left end of
    interval l at level n is sum_k d_k (R_{k-1} - R_k) over the binary digits
    d_1..d_n of l-1 (most significant first).
    """
    dim: int
    p: float
    n_max: int
    log_levels_mp: list = field(repr=False)
    dps: int = 40

    @property
    def weight(self) -> LogWeight:
        return LogWeight(self.p, self.dim)

    @cached_property
    def log_levels(self) -> np.ndarray:
        """log R_n for n = 0..n_max as floats."""
        return np.array([float(u) for u in self.log_levels_mp])

    @cached_property
    def levels(self) -> np.ndarray:
        """R_n as floats (may underflow to 0 for deep critical levels)."""
        return np.exp(self.log_levels)

    @cached_property
    def log_ratios(self) -> np.ndarray:
        """log r_n for n = 1..n_max."""
        return np.array([float(self.log_levels_mp[n] - self.log_levels_mp[n - 1])
                         for n in range(1, self.n_max + 1)])

    @property
    def ratios(self) -> np.ndarray:
        return np.exp(self.log_ratios)

    @property
    def rbar(self) -> float:
        """max_n r_n over the computed levels (used as the upper ratio bound)."""
        return float(np.max(self.ratios))

    @property
    def rbar_bound(self) -> float:
        """Analytic upper bound for r_n, n >= 2, with the module's alpha."""
        w = self.weight
        return 2.0 ** (-self.dim / (w.gamma + w.alpha))

    @property
    def rbar_lower(self) -> float | None:
        """Analytic lower bound for r_n, n >= 2 (p > p_F only)."""
        w = self.weight
        if w.beta is None:
            return None
        return 2.0 ** (-self.dim / (w.gamma - w.beta))

    def identity_residuals(self) -> np.ndarray:
        """|2^{Nn} R_n^gamma phi(R_n) / phi(1/2) - 1| for n = 1..n_max."""
        with mpmath.workdps(self.dps):
            gamma = mpmath.mpf(self.dim) - mpmath.mpf(2) / (self.p - 1)
            target = _mp_log_phi(mpmath.log(mpmath.mpf(1) / 2), self.p)
            res = []
            for n in range(1, self.n_max + 1):
                u = self.log_levels_mp[n]
                lg = self.dim * n * mpmath.log(2) + gamma * u + _mp_log_phi(u, self.p) - target
                res.append(float(abs(mpmath.expm1(lg))))
        return np.array(res)

    # ------------------------------------------------------------ intervals
    def R_mp(self, n: int, dps: int | None = None):
        with mpmath.workdps(dps or self.dps):
            return mpmath.exp(self.log_levels_mp[n])

    def addresses(self, n: int) -> np.ndarray:
        """Binary digits (2^n x n) of the intervals at level n."""
        l = np.arange(2 ** n)
        return ((l[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.int8)

    def intervals(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Left and right ends of the level-n intervals in double precision.

        Raises when R_n is too small to be resolved next to the interval
        positions; deeper levels must be handled in log form.
        """
        self._check_level(n)
        if n == 0:
            return np.array([0.0]), np.array([1.0])
        R = self.levels
        if R[n] < 64 * np.finfo(float).eps:
            raise ArithmeticError(f"level {n} (R_n = e^{self.log_levels[n]:.4g}) is not "
                                  "representable next to O(1) positions in double precision")
        gaps = R[:n] - R[1:n + 1]
        left = self.addresses(n) @ gaps
        return left, left + R[n]

    def intervals_mp(self, n: int, dps: int | None = None) -> tuple[list, list]:
        """Interval ends as mpf at the requested precision (recursion of the construction)."""
        self._check_level(n)
        dps = dps or self.dps
        with mpmath.workdps(dps):
            R = [mpmath.exp(u) for u in self.log_levels_mp[:n + 1]]
            a, b = [mpmath.mpf(0)], [mpmath.mpf(1)]
            for k in range(n):
                na, nb = [], []
                for al, bl in zip(a, b):
                    na += [al, bl - R[k + 1]]
                    nb += [al + R[k + 1], bl]
                a, b = na, nb
        return a, b

    def check_intervals(self, n: int, max_dps: int = 5000) -> dict:
        """Length, ordering and nesting checks at a precision that resolves R_n."""
        self._check_level(n)
        need = int(-self.log_levels[n] / math.log(10)) + 20
        exact = need <= max_dps
        out = {"level": n, "precision_digits": max(need, self.dps) if exact else None,
               "ratios_below_half": bool(np.all(self.log_ratios[:n] < math.log(0.5)))}
        if not exact:
            # the address encoding makes ordering equivalent to 2 R_{k+1} < R_k
            out.update(lengths_ok=True, disjoint=out["ratios_below_half"],
                       nested=out["ratios_below_half"], method="structural")
            return out
        dps = max(need, self.dps)
        a, b = self.intervals_mp(n, dps)
        with mpmath.workdps(dps):
            Rn = mpmath.exp(self.log_levels_mp[n])
            tol = Rn * mpmath.mpf(10) ** (-12)
            lengths_ok = all(abs((bb - aa) - Rn) <= tol for aa, bb in zip(a, b))
            disjoint = all(b[i] < a[i + 1] for i in range(len(a) - 1))
            nested = True
            if n >= 1:
                pa, pb = self.intervals_mp(n - 1, dps)
                for i, (aa, bb) in enumerate(zip(a, b)):
                    j = i // 2
                    nested &= bool(pa[j] - tol <= aa and bb <= pb[j] + tol)
        out.update(lengths_ok=bool(lengths_ok), disjoint=bool(disjoint), nested=bool(nested),
                   method="mpmath")
        return out

    def _check_level(self, n: int) -> None:
        if not 0 <= n <= self.n_max:
            raise ValueError(f"level {n} outside 0..{self.n_max}")

    def to_dict(self, digits: int = 30, max_interval_level: int | None = None) -> dict:
        """JSON-ready record; numbers as decimal strings with `digits` significant digits."""
        levels = [mpmath.nstr(self.R_mp(n, digits + 10), digits) for n in range(self.n_max + 1)]
        ratios = [mpmath.nstr(mpmath.exp(self.log_levels_mp[n] - self.log_levels_mp[n - 1]),
                              digits) for n in range(1, self.n_max + 1)]
        top = self.n_max if max_interval_level is None else min(max_interval_level, self.n_max)
        intervals = {}
        for n in range(top + 1):
            a, b = self.intervals_mp(n, digits + 10)
            intervals[str(n)] = [[mpmath.nstr(x, digits), mpmath.nstr(y, digits)]
                                 for x, y in zip(a, b)]
        return {
            "N": self.dim, "p": self.p, "n_max": self.n_max,
            "levels": levels, "log_levels": [mpmath.nstr(u, digits) for u in self.log_levels_mp],
            "ratios": ratios, "rbar": self.rbar, "rbar_bound": self.rbar_bound,
            "rbar_lower": self.rbar_lower,
            "intervals": intervals,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2, sort_keys=True)


def cantor_levels(N: int, p: float, n_max: int, dps: int = 40) -> CantorSet:
    """Solve for R_0 = 1 > R_1 > ... > R_{n_max} by bisection in log R."""
    if N < 1 or n_max < 1:
        raise ValueError("need N >= 1 and n_max >= 1")
    if p < fujita_exponent(N) - 1e-12:
        raise ValueError("the construction needs p >= (N+2)/N")
    with mpmath.workdps(dps):
        logs = [mpmath.mpf(0)] + [_solve_level(n, N, p) for n in range(1, n_max + 1)]
    return CantorSet(N, float(p), n_max, logs, dps)


def critical_closed_form_log(n: int, dps: int = 40):
    """log of ((e+2)^{4^n} - e)^{-1} as mpf, the exact level for N = 1, p = 3."""
    with mpmath.workdps(dps):
        return -mpmath.log(mpmath.power(mpmath.e + 2, 4 ** n) - mpmath.e)
