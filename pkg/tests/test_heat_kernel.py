import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fujitalab.geometry import DomainError, origin, point_at_distance
from fujitalab.heat_kernel import (HeatKernel, gaussian_bounds_check, harnack_bound, harnack_ratio,
                                   harnack_sweep, hyperbolic2_reference, kernel_eval, kernel_mass,
                                   linheat_constant, scaling_ratio, semigroup_defect)
from fujitalab.measures import dirac, uniform_density


def gauss(d, t, N=1):
    return (4 * math.pi * t) ** (-N / 2) * math.exp(-d * d / (4 * t))


@pytest.fixture(scope="module")
def kernels(models):
    return {k: HeatKernel(M) for k, M in models.items()}


# ------------------------------------------------------------ values

def test_euclidean_on_diagonal(kernels, models):
    M = models["R1"]
    x = origin(M)
    assert kernel_eval(kernels["R1"], x, x, 1 / (4 * math.pi)) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("t", [1e-4, 1e-3, 1e-2])
def test_circle_small_time_matches_gaussian(kernels, models, t):
    x = origin(models["S1"])
    assert kernel_eval(kernels["S1"], x, x, t) / gauss(0.0, t) == pytest.approx(1.0, rel=1e-12)


def test_circle_image_sum_oracle(kernels, models):
    # independent oracle: the periodised Gaussian over 41 images
    M = models["S1"]
    for d, t in [(0.3, 0.5), (2.5, 2.0), (math.pi - 1e-3, 0.05)]:
        ref = sum(gauss(d + 2 * math.pi * k, t) for k in range(-20, 21))
        y = point_at_distance(M, d)
        assert kernel_eval(kernels["S1"], origin(M), y, t) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_h3_closed_form(kernels, models, t):
    M = models["H3"]
    x = origin(M)
    assert kernel_eval(kernels["H3"], x, x, t) == pytest.approx((4 * math.pi * t) ** -1.5 * math.exp(-t),
                                                                rel=1e-12)
    d = 0.8
    ref = (4 * math.pi * t) ** -1.5 * d / math.sinh(d) * math.exp(-t - d * d / (4 * t))
    assert kernel_eval(kernels["H3"], x, point_at_distance(M, d), t) == pytest.approx(ref, rel=1e-12)


def test_h2_matches_reference_integral(kernels):
    for d, t in [(0.0, 0.1), (0.5, 0.5), (2.0, 1.0)]:
        assert kernels["H2"].radial(d, t) == pytest.approx(hyperbolic2_reference(d, t), rel=1e-8)


def test_s2_series_against_legendre_oracle(kernels, models):
    # independent oracle: sum (2l+1)/(4 pi) e^{-l(l+1)t} P_l(cos d) with scipy
    from scipy.special import eval_legendre
    M = models["S2"]
    for d, t in [(0.4, 0.3), (2.0, 0.5), (1.0, 1.0)]:
        ls = np.arange(200)
        ref = float(np.sum((2 * ls + 1) / (4 * math.pi) * np.exp(-ls * (ls + 1) * t)
                           * eval_legendre(ls, math.cos(d))))
        y = point_at_distance(M, d)
        assert kernel_eval(kernels["S2"], origin(M), y, t) == pytest.approx(ref, rel=1e-10)


# ------------------------------------------------------------ mass and semigroup

@pytest.mark.parametrize("key,t,tol", [("R2", 0.3, 1e-8), ("S2", 0.3, 1e-8), ("H2", 0.5, 1e-6),
                                       ("S1", 0.2, 1e-8), ("H3", 0.1, 1e-6), ("S3", 0.05, 1e-6)])
def test_kernel_mass(kernels, key, t, tol):
    assert kernel_mass(kernels[key], t) == pytest.approx(1.0, abs=tol)


@pytest.mark.parametrize("key", ["R1", "R2", "S1", "S2", "H2", "H3"])
def test_mass_over_three_decades(kernels, key):
    for t in (0.01, 0.1, 1.0):
        assert abs(kernel_mass(kernels[key], t) - 1.0) <= 1e-6


def test_semigroup_examples(kernels, models):
    assert semigroup_defect(kernels["R1"], np.array([0.0]), np.array([1.0]), 0.5, 0.5) < 1e-8
    S1 = models["S1"]
    assert semigroup_defect(kernels["S1"], origin(S1), point_at_distance(S1, 1.0), 0.2, 0.2) < 1e-8
    S2 = models["S2"]
    assert semigroup_defect(kernels["S2"], origin(S2), point_at_distance(S2, 0.7), 0.1, 0.4) < 1e-6


# ------------------------------------------------------------ invariants

@given(d=st.floats(0.0, 2.5), ang=st.floats(0, 2 * math.pi), t=st.floats(0.005, 2.0))
def test_positive_and_symmetric(kernels, models, d, ang, t):
    for key in ("S2", "H2", "R2"):
        M = models[key]
        x = point_at_distance(M, 0.3, [1.0, 0.0])
        y = point_at_distance(M, d, [math.cos(ang), math.sin(ang)])
        kxy = kernel_eval(kernels[key], x, y, t)
        kyx = kernel_eval(kernels[key], y, x, t)
        assert kxy > 0
        assert kxy == pytest.approx(kyx, rel=1e-13)


# ------------------------------------------------------------ Harnack

@pytest.mark.parametrize("N", [1, 2, 3])
def test_harnack_on_diagonal(kernels, N):
    E = kernels[f"R{N}"]
    x = origin(E.manifold)
    assert harnack_ratio(E, x, x, x, 0.37) == pytest.approx(2 ** (N / 2), rel=1e-13)


def test_harnack_explicit_gaussians(kernels):
    E = kernels["R1"]
    r = harnack_ratio(E, np.array([0.0]), np.array([1.0]), np.array([1.1]), 0.25)
    assert r == pytest.approx(gauss(1.0, 0.25) / gauss(1.1, 0.5), rel=1e-13)


def test_harnack_precondition(kernels):
    with pytest.raises(DomainError):
        harnack_ratio(kernels["R1"], np.array([0.0]), np.array([0.0]), np.array([1.0]), 0.25)


@pytest.mark.parametrize("N", [1, 2])
def test_harnack_sweep_below_exact_supremum(kernels, N):
    # [DERIVED] maximising G(a,t)/G(a+c sqrt t, 2t) over a >= 0, |c| <= 1 gives 2^{N/2} e^{1/4}
    sup = harnack_sweep(kernels[f"R{N}"], [0.1], n=10).sup()
    exact = 2 ** (N / 2) * math.exp(0.25)
    assert sup <= exact * (1 + 1e-12)
    assert sup >= 0.99 * exact
    assert harnack_bound(N) == 2 ** (0.75 * N) * math.exp(0.375)


def test_harnack_sphere_finite(kernels):
    rep = harnack_sweep(kernels["S2"], [0.05, 0.2], n=5)
    assert np.isfinite(rep.sup()) and rep.inf() > 0


# ------------------------------------------------------------ Gaussian bounds

@given(d=st.floats(0.0, 4.0), t=st.floats(0.01, 1.0))
def test_euclidean_lower_ratio_closed_form(kernels, d, t):
    E = kernels["R1"]
    chk = gaussian_bounds_check(E, np.array([0.0]), np.array([d]), t, 2.0, math.inf, 0.0)
    ref = math.exp(d * d * (0.5 - 0.25) / t) / math.sqrt(4 * math.pi)
    assert chk["lower_ratio"] == pytest.approx(ref, rel=1e-10)
    assert chk["lower_ratio"] >= (4 * math.pi) ** -0.5 * (1 - 1e-12)


def test_sphere_gaussian_bounds(kernels, models):
    from fujitalab.heat_kernel import fit_gaussian_constants
    E = kernels["S2"]
    C, c = fit_gaussian_constants(E, 1.0)
    M = models["S2"]
    chk = gaussian_bounds_check(E, origin(M), point_at_distance(M, 1.0), 0.2, 1.0, C, c)
    assert chk["upper_ok"] and chk["lower_ok"]


def test_h3_upper_constant_on_grid(kernels):
    from fujitalab.heat_kernel import gaussian_ratio_grid
    up, _ = gaussian_ratio_grid(kernels["H3"], np.linspace(0.01, 1.0, 30), np.linspace(0.01, 0.5, 30))
    assert np.all(np.isfinite(up)) and np.max(up) < 1.0


def test_gaussian_ratio_saturates(kernels):
    chk = gaussian_bounds_check(kernels["R1"], np.array([0.0]), np.array([60.0]), 0.5, 2.0, 1.0, 0.0)
    assert math.isinf(chk["lower_ratio"]) and chk["lower_ok"]


# ------------------------------------------------------------ scaling

@pytest.mark.parametrize("N", [1, 2, 3])
def test_scaling_on_diagonal(kernels, N):
    xi = np.full(N, 0.2)
    assert scaling_ratio(kernels[f"R{N}"], xi, xi, 1.0, 1.0, 0.1) == pytest.approx(9 ** (-N / 2), rel=1e-13)
    # general alpha: the time ratio is 9 alpha^2
    assert scaling_ratio(kernels[f"R{N}"], xi, xi, 0.5, 1.0, 0.1) == pytest.approx(2.25 ** (-N / 2), rel=1e-13)


def test_scaling_explicit(kernels):
    r = scaling_ratio(kernels["R1"], np.array([0.0]), np.array([1.0]), 0.5, 1.0, 0.1)
    assert r == pytest.approx(gauss(0.5, 0.1) / gauss(1.0, 0.1 / (9 * 0.25)), rel=1e-12)
    assert r > 0


def test_scaling_sphere_positive(kernels):
    vals = [scaling_ratio(kernels["S2"], np.array([a, 0.0]), np.array([0.0, b]), al, 1.0, 0.1)
            for a in (0.0, 0.4) for b in (0.1, 0.7) for al in (0.25, 1.0)]
    assert min(vals) > 0


# ------------------------------------------------------------ linear heat constant

def test_linheat_lebesgue(kernels, models):
    mu = uniform_density(models["R1"], 1.0)
    c = linheat_constant(kernels["R1"], mu, [0.01, 0.1, 1.0], x_samples=[np.array([0.0])])
    assert c == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("N", [1, 2])
def test_linheat_dirac(kernels, models, N):
    M = models[f"R{N}"]
    c = linheat_constant(kernels[f"R{N}"], dirac(M, 1.0), [0.05, 0.5], x_samples=[origin(M)])
    assert c == pytest.approx((4 * math.pi) ** (-N / 2), rel=1e-12)


def test_linheat_sphere_uniform_finite(kernels, models):
    M = models["S2"]
    c = linheat_constant(kernels["S2"], uniform_density(M, 1.0), [0.01, 0.1, 1.0])
    assert 0 < c < math.inf


def test_linheat_zero_measure(kernels, models):
    from fujitalab.measures import zero_measure
    with pytest.raises(ValueError):
        linheat_constant(kernels["R1"], zero_measure(models["R1"]), [0.1])
