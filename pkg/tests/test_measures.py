import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from fujitalab.cantor import LogWeight, cantor_levels, critical_closed_form_log, log_phi_of_log, phi_log
from fujitalab.geometry import make_manifold, origin, point_at_distance
from fujitalab.measures import (ETA, CantorDensity, CutoffFunction, MonotonicityError, cantor_density,
                                critical_profile, dirac, growth_classify, lumu_bracket_check, make_h,
                                singular_profile, sup_ball_mass, uloc_norm, uniform_density,
                                zero_measure)


# ------------------------------------------------------------ phi

def test_phi_log_examples():
    assert phi_log(math.inf, 3.0) == 1.0
    assert phi_log(1e300, 3.0) == pytest.approx(1.0, abs=1e-15)
    assert phi_log(0.5, 3.0) == pytest.approx(math.log(math.e + 2) ** -0.5, rel=1e-15)
    assert phi_log(0.5, 3.0) == pytest.approx(0.8028, abs=5e-5)
    assert phi_log(1e-300, 3.0) < 0.04
    with pytest.raises(ValueError):
        phi_log(0.0, 3.0)


@given(u=st.floats(-700, 50), p=st.floats(1.2, 8.0))
def test_log_phi_of_log_consistent(u, p):
    assert log_phi_of_log(u, p) == pytest.approx(math.log(phi_log(math.exp(u), p)), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("N,p", [(1, 3.0), (1, 5.0), (2, 2.0), (2, 3.0), (3, 3.0)])
def test_log_weight_monotonicity(N, p):
    rep = LogWeight(p, N).monotonicity_report(np.geomspace(1e-12, 1e3, 2000))
    assert all(rep.values()), rep


# ------------------------------------------------------------ cutoff and h

@given(x=st.floats(-1.0, 2.0), y=st.floats(-1.0, 2.0))
def test_cutoff_monotone_and_bounded(x, y):
    lo, hi = min(x, y), max(x, y)
    assert 0.0 <= ETA(hi) <= ETA(lo) <= 1.0
    inc = CutoffFunction(increasing=True)
    assert inc(x) == pytest.approx(1 - ETA(x), abs=1e-15)


def test_cutoff_derivatives_match_finite_differences():
    x = np.linspace(0.45, 1.05, 41)
    h = 1e-6
    assert np.allclose(ETA.derivative(x), (ETA(x + h) - ETA(x - h)) / (2 * h), atol=1e-7)
    assert np.allclose(ETA.second_derivative(x), (ETA.derivative(x + h) - ETA.derivative(x - h)) / (2 * h),
                       atol=1e-5)
    assert ETA(0.5) == 1.0 and ETA(1.0) == 0.0


def test_make_h_power():
    h = make_h(5.0, 2, alpha=2.0)
    assert h(4.0) == 16.0 and h.h_inv(16.0) == pytest.approx(4.0, rel=1e-15)
    with pytest.raises(ValueError):
        make_h(5.0, 2, alpha=6.0)
    # h(r^{-2/(p-1)}) must stay integrable near 0: alpha < N(p-1)/2
    with pytest.raises(ValueError):
        make_h(5.0, 1, alpha=2.0)
    assert make_h(5.0, 1).exponent == pytest.approx(1.5)
    assert make_h(3.0, 3).exponent == pytest.approx(2.0)
    with pytest.raises(ValueError):
        make_h(2.0, 1)


def test_make_h_log_value():
    h = make_h(2.0, 2, beta=0.5, log_offset=math.e ** 3)
    # sqrt(log(e^3 + 1)) = 1.746020...
    assert h(1.0) == pytest.approx(float(mpmath.sqrt(mpmath.log(mpmath.e ** 3 + 1))), rel=1e-15)
    assert h(1.0) == pytest.approx(1.746020, abs=1e-6)


@pytest.mark.parametrize("kw", [dict(p=2.0, N=2, beta=0.5, log_offset=math.e ** 3), dict(p=3.0, N=1),
                                dict(p=5.0, N=1), dict(p=2.0, N=2)])
def test_h_inverse_roundtrip(kw):
    h = make_h(kw.pop("p"), kw.pop("N"), **kw)
    for z in (0.1, 1.0, 10.0):
        assert h.h_inv(h(z)) == pytest.approx(z, rel=1e-10)
    rep = h.monotonicity_report(np.geomspace(1e-6, 1e6, 500))
    assert rep["increasing"] and rep["convex"] and rep["zp_over_h_increasing"] and rep["h_over_z_increasing"]


def test_make_h_rejects_small_offset_with_witness():
    with pytest.raises(MonotonicityError) as exc:
        make_h(2.0, 2, beta=0.5, log_offset=2.0)
    assert exc.value.witness == 2.0


# ------------------------------------------------------------ profiles

def test_critical_profile_power():
    M = make_manifold("euclidean", 1)
    mu = critical_profile(M, 5.0, 1.0)
    assert float(mu.profile(0.25)) == pytest.approx(2.0 * ETA(0.25), rel=1e-15)
    assert float(mu.profile(1.0)) == 0.0 and float(mu.profile(3.0)) == 0.0


@pytest.mark.parametrize("N", [1, 2])
def test_critical_profile_log_leading_order(N):
    M = make_manifold("euclidean", N)
    rT = threshold_radii_T(M, 0.25)
    mu = critical_profile(M, 1 + 2 / N, 0.25)
    for r in (1e-3, 1e-6, 1e-10):
        val = float(mu.profile(r)) * r ** N * math.log(math.e ** 2 + rT / r) ** (N / 2 + 1)
        assert val == pytest.approx(rT ** N, rel=1e-12)


def threshold_radii_T(M, T):
    from fujitalab.geometry import threshold_radii
    return threshold_radii(M, T).rho_T


def test_singular_profile_values():
    M = make_manifold("euclidean", 1)
    assert float(singular_profile(M, 5.0, 3.0).profile(1.0)) == pytest.approx(3.0)
    assert float(singular_profile(M, 5.0, 1.0).profile(0.25)) == pytest.approx(2.0)


def test_singular_profile_held_beyond_rho_inf():
    S2 = make_manifold("sphere", 2, 1.0)
    mu = singular_profile(S2, 3.0, 1.0)
    cap = math.pi / 4
    assert float(mu.profile(2.0)) == pytest.approx(float(mu.profile(cap)))


# ------------------------------------------------------------ Cantor levels

def test_cantor_first_level_closed_form():
    C = cantor_levels(1, 3.0, 4)
    ref = 1 / ((math.e + 2) ** 4 - math.e)
    assert C.levels[1] == pytest.approx(ref, rel=1e-14)
    assert C.levels[1] == pytest.approx(2.029e-3, rel=1e-3)


def test_cantor_closed_form_deep_levels():
    # [DERIVED] log R_n = -log((e+2)^{4^n} - e) evaluated independently with mpmath
    C = cantor_levels(1, 3.0, 10)
    mpmath.mp.dps = 50
    for n in range(1, 11):
        ref = -mpmath.log((mpmath.e + 2) ** (4 ** n) - mpmath.e)
        assert abs(mpmath.expm1(C.log_levels_mp[n] - ref)) <= 1e-12
        assert abs(mpmath.expm1(critical_closed_form_log(n) - ref)) <= 1e-30


@pytest.mark.parametrize("N,p,n", [(1, 3.0, 10), (1, 5.0, 10), (2, 2.0, 5), (2, 3.0, 5), (1, 2.0, 6)][:4])
def test_cantor_identity_and_ratios(N, p, n):
    C = cantor_levels(N, p, n)
    assert np.max(C.identity_residuals()) <= 1e-10
    assert np.all(C.ratios < 0.5)
    assert np.all(np.diff(C.log_levels) < 0)


def test_cantor_ratio_bounds_supercritical():
    C = cantor_levels(1, 5.0, 10)
    assert C.rbar_lower is not None
    assert np.all(C.ratios[1:] >= C.rbar_lower)
    assert C.rbar <= C.rbar_bound


def test_cantor_rejects_subcritical():
    with pytest.raises(ValueError):
        cantor_levels(1, 2.0, 3)


def test_cantor_intervals_level_one():
    C = cantor_levels(1, 5.0, 4)
    a, b = C.intervals(1)
    R1 = C.levels[1]
    assert np.allclose(a, [0.0, 1 - R1]) and np.allclose(b, [R1, 1.0])
    assert C.intervals(0) == (pytest.approx([0.0]), pytest.approx([1.0]))


@pytest.mark.parametrize("n", [2, 5, 8])
def test_cantor_intervals_nested_and_disjoint(n):
    C = cantor_levels(1, 5.0, n)
    a, b = C.intervals(n)
    pa, pb = C.intervals(n - 1)
    assert np.all(b - a > 0) and np.all(a[1:] > b[:-1])
    parent = np.repeat(np.arange(len(pa)), 2)
    assert np.all(a >= pa[parent] - 1e-15) and np.all(b <= pb[parent] + 1e-15)
    chk = C.check_intervals(n)
    assert chk["lengths_ok"] and chk["disjoint"] and chk["nested"]


def test_cantor_density_level_zero_and_one():
    M = make_manifold("euclidean", 1)
    C = cantor_levels(1, 5.0, 6)
    d0 = cantor_density(C, 0, M, scale=1.0)
    assert d0.total_mass() == pytest.approx(1.0)
    a, b = d0.intervals()
    assert list(a) == [0.0] and list(b) == [1.0]
    d1 = cantor_density(C, 1, M, scale=1.0)
    a, b = d1.intervals()
    R1 = C.levels[1]
    assert np.allclose(a, [0, 1 - R1]) and np.allclose(b, [R1, 1])


@pytest.mark.parametrize("n", range(7))
def test_cantor_density_total_mass(n):
    M = make_manifold("euclidean", 1)
    C = cantor_levels(1, 5.0, 6)
    assert cantor_density(C, n, M, scale=1.0).total_mass() == pytest.approx(2 ** n * C.levels[n], rel=1e-12)


def test_cantor_density_chart_too_small():
    from fujitalab.geometry import DomainError
    S1 = make_manifold("circle", 1, 1.0)
    with pytest.raises(DomainError):
        CantorDensity(S1, cantor_levels(1, 5.0, 2), 1, scale=2.0)


def test_cantor_density_2d_mass_matches_product():
    M = make_manifold("euclidean", 2)
    C = cantor_levels(2, 3.0, 3)
    d = cantor_density(C, 2, M, scale=0.5)
    assert d.total_mass() == pytest.approx(math.exp(d.log_total_mass_euclidean()), rel=1e-12)


# ------------------------------------------------------------ ball masses

def test_dirac_ball_mass():
    M = make_manifold("sphere", 2, 1.0)
    mu = dirac(M, 2.5)
    z = point_at_distance(M, 0.3)
    assert mu.ball_mass(z, 0.31) == 2.5
    assert mu.ball_mass(z, 0.29) == 0.0
    s = sup_ball_mass(mu, 0.1)
    assert s.value == 2.5 and np.allclose(s.center, origin(M))


def test_lebesgue_and_uniform_ball_mass():
    R2 = make_manifold("euclidean", 2)
    assert uniform_density(R2, 1.0).ball_mass(np.array([3.0, -1.0]), 0.7) == pytest.approx(math.pi * 0.49)
    S2 = make_manifold("sphere", 2, 1.0)
    assert uniform_density(S2, 1.0).ball_mass(origin(S2), math.pi / 2) == pytest.approx(2 * math.pi)


def test_empty_measure_sup():
    assert sup_ball_mass(zero_measure(make_manifold("euclidean", 2)), 0.5).value == 0.0


@pytest.mark.parametrize("kind,N,k", [("euclidean", 1, 0.0), ("euclidean", 2, 0.0), ("sphere", 2, 1.0),
                                      ("hyperbolic", 2, 1.0)])
def test_decreasing_radial_sup_attained_at_center(kind, N, k):
    M = make_manifold(kind, N, k)
    mu = critical_profile(M, 1 + 2 / N + 1.0, 0.25)
    for rho in (0.05, 0.2, 0.4):
        c = mu.centered_mass(rho)
        assert sup_ball_mass(mu, rho).value == pytest.approx(c, rel=1e-12)
        for D in (0.01, 0.05, 0.2):
            assert mu.ball_mass_at_distance(D, rho) <= c * (1 + 1e-9)


def test_radial_ball_mass_against_quadrature_oracle():
    from scipy import integrate
    M = make_manifold("euclidean", 1)
    mu = singular_profile(M, 5.0, 1.0)
    # off-center ball (0.2 - 0.1, 0.2 + 0.1): int |x|^{-1/2} dx
    ref = integrate.quad(lambda x: abs(x) ** -0.5, 0.1, 0.3)[0]
    assert mu.ball_mass_at_distance(0.2, 0.1) == pytest.approx(ref, rel=1e-9)
    assert mu.centered_mass(0.25) == pytest.approx(4 * 0.5, rel=1e-10)


# ------------------------------------------------------------ uloc norms

@pytest.mark.parametrize("q", [1.0, 2.0, 3.5])
def test_uloc_examples(q):
    S1 = make_manifold("circle", 1, 1.0)
    assert uloc_norm(uniform_density(S1, 1.0), q, 0.5) == pytest.approx((2 * 0.5) ** (1 / q), rel=1e-12)
    R2 = make_manifold("euclidean", 2)
    assert uloc_norm(uniform_density(R2, 2.0), q, 0.3) == pytest.approx(2.0 * (math.pi * 0.09) ** (1 / q),
                                                                        rel=1e-12)
    assert uloc_norm(uniform_density(R2, 0.0), q, 0.3) == 0.0


def test_uloc_rejects_atoms():
    with pytest.raises(TypeError):
        uloc_norm(dirac(make_manifold("euclidean", 1)), 2.0, 0.1)


# ------------------------------------------------------------ growth

@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
def test_growth_zero_measure(p):
    M = make_manifold("euclidean", 1)
    v = growth_classify(zero_measure(M), M, p, 1.0)
    assert all(c["C"] == 0.0 and c["bounded"] for c in v.conditions.values())


@pytest.mark.parametrize("N,p", [(1, 5.0), (2, 3.0)])
def test_growth_dirac_flags_power_condition(N, p):
    M = make_manifold("euclidean", N)
    v = growth_classify(dirac(M, 1.0), M, p, 1.0)
    assert v.conditions["nec_iii"]["applies"] and not v.conditions["nec_iii"]["bounded"]


def test_growth_critical_profile_bounded():
    M = make_manifold("euclidean", 1)
    v = growth_classify(critical_profile(M, 5.0, 1.0), M, 5.0, 1.0)
    assert v.conditions["nec_iii"]["bounded"]


@pytest.mark.parametrize("kind,N,k,p", [("euclidean", 1, 0.0, 5.0), ("euclidean", 1, 0.0, 3.0),
                                        ("euclidean", 2, 0.0, 2.0)])
def test_lumu_brackets(kind, N, k, p):
    M = make_manifold(kind, N, k)
    mu = critical_profile(M, p, 1.0)
    rep = lumu_bracket_check(mu, M, p, 1.0)
    assert rep.passed and rep.stable
    # near rho_T the mass is bounded by the total mass
    assert rep.mass[-1] <= mu.total_mass() * (1 + 1e-9)
