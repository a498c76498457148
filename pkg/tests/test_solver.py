import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fujitalab import solver as S
from fujitalab.geometry import make_manifold
from fujitalab.measures import critical_profile, dirac, make_h, uniform_density, zero_measure


@pytest.fixture(scope="module")
def R1():
    return make_manifold("euclidean", 1)


@pytest.fixture(scope="module")
def S1():
    return make_manifold("circle", 1, 1.0)


@pytest.fixture(scope="module")
def g_R1(R1):
    return S.make_grid(R1)


@pytest.fixture(scope="module")
def g_S1(S1):
    return S.make_grid(S1)


# ------------------------------------------------------------ grids and levels

def test_grid_integrates_volume(S1, g_S1):
    assert g_S1.integrate(np.ones(g_S1.n)) == pytest.approx(2 * math.pi, rel=1e-13)
    S2 = make_manifold("sphere", 2, 1.0)
    assert S.make_grid(S2).integrate(1.0) == pytest.approx(4 * math.pi, rel=1e-12)


def test_time_levels_structure():
    t = S.time_levels(0.5, extra=[0.123, 2.0])
    assert t[0] == 0.0 and t[-1] == 0.5 and 0.123 in t and 2.0 not in t
    assert np.all(np.diff(t) > 0)


# ------------------------------------------------------------ linear evolution

def test_linear_zero(R1, g_R1):
    assert not np.any(S.linear_evolve(R1, zero_measure(R1), 0.3, g_R1).values)


def test_linear_dirac_is_kernel(R1, g_R1):
    t = 0.2
    f = S.linear_evolve(R1, dirac(R1, 1.0), t, g_R1)
    assert np.allclose(f.values, (4 * math.pi * t) ** -0.5 * np.exp(-g_R1.r ** 2 / (4 * t)), rtol=1e-13)


@pytest.mark.parametrize("t", [0.01, 0.5, 3.0])
def test_linear_uniform_circle(S1, g_S1, t):
    f = S.linear_evolve(S1, uniform_density(S1, 1.0), t, g_S1)
    assert f.mass() == pytest.approx(2 * math.pi, rel=1e-12)
    assert np.allclose(f.values, 1.0, atol=1e-12)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_linear_pairing_gaussian_oracle(R1, g_R1, t):
    # [DERIVED] int e^{-x^2} G_t(x) dx = (1 + 4t)^{-1/2}
    f = S.linear_evolve(R1, dirac(R1, 1.0), t, g_R1)
    pair = S.initial_trace(g_R1, f.values[None, :], lambda r: np.exp(-r ** 2))[0]
    assert pair == pytest.approx((1 + 4 * t) ** -0.5, rel=1e-6)


# ------------------------------------------------------------ Duhamel map

def test_duhamel_of_zero_is_linear_part(R1, g_R1):
    prob = S.make_problem(R1, dirac(R1, 0.5), 2.0, 0.5, g_R1)
    assert np.array_equal(S.duhamel_apply(prob, np.zeros(prob.shape)), prob.U)
    prob0 = S.make_problem(R1, zero_measure(R1), 2.0, 0.5, g_R1)
    assert not np.any(S.duhamel_apply(prob0, np.zeros(prob0.shape)))


@pytest.mark.parametrize("kind,N", [("circle", 1), ("sphere", 2)])
def test_duhamel_constant_adds_c_power_t(kind, N):
    M = make_manifold(kind, N, 1.0)
    cfg = S.IterationConfig(levels_per_unit=16, geometric_levels=4)
    prob = S.make_problem(M, zero_measure(M), 3.0, 0.5, S.make_grid(M, h=math.pi / 16, grade=6), cfg)
    c = 0.7
    D = S.duhamel_part(prob, np.full(prob.shape, c))
    assert np.allclose(D, c ** 3 * prob.times[:, None], rtol=1e-9, atol=1e-12)


# ------------------------------------------------------------ Picard iteration

def test_picard_zero(R1, g_R1):
    res = S.picard_solve(R1, zero_measure(R1), 3.0, 1.0, grid=g_R1)
    assert res.status == "converged" and res.iterations == 1 and not np.any(res.u)


def test_picard_constant_data_ode(S1, g_S1):
    res = S.picard_solve(S1, uniform_density(S1, 0.5), 2.0, 0.5, grid=g_S1)
    exact = 1.0 / (1.0 / 0.5 - res.problem.times)
    assert res.status == "converged"
    assert np.max(np.abs(res.u - exact[:, None]) / exact[:, None]) < 1e-3


@pytest.fixture(scope="module")
def dirac_solution(R1, g_R1):
    prob = S.make_problem(R1, dirac(R1, 0.2), 2.0, 1.0, g_R1)
    return prob, S.picard_solve(R1, prob.mu, 2.0, 1.0, prob=prob)


def test_picard_monotone_and_consistent(dirac_solution):
    prob, res = dirac_solution
    assert res.status == "converged"
    assert res.min_monotone_gap >= -1e-10
    scale = max(1.0, float(np.max(res.u)))
    cfg = S.IterationConfig()
    assert np.max(np.abs(res.u - S.duhamel_apply(prob, res.u))) / scale < 10 * cfg.tol


def test_supersolution_dominates_limit(dirac_solution):
    prob, res = dirac_solution
    ubar = 2.0 * prob.U
    cert = S.supersolution_check(prob, ubar)
    assert cert["certified"] and cert["min_relative_defect"] > 0
    assert np.all(res.u <= ubar + 1e-12 * np.max(ubar))


def test_supersolution_zero(R1, g_R1):
    prob = S.make_problem(R1, zero_measure(R1), 2.0, 0.5, g_R1)
    cert = S.supersolution_check(prob, np.zeros(prob.shape))
    assert cert["min_defect"] == 0.0 and cert["certified"]


def test_h_transform_supersolution_critical_profile(R1, g_R1):
    # data c * f for the critical profile f; candidate 2 c h^{-1}(S(t) h(f))
    c = 0.05
    f = critical_profile(R1, 5.0, 1.0)
    prob = S.make_problem(R1, f, 5.0, 1.0, g_R1)
    ubar = S.h_transform_candidate(prob, make_h(5.0, 1), c)
    prob.U *= c
    prob.u0 *= c
    cert = S.supersolution_check(prob, ubar)
    assert cert["certified"], cert
    assert cert["min_relative_defect"] > 0


def test_picard_large_data_hits_ceiling(S1, g_S1):
    res = S.picard_solve(S1, uniform_density(S1, 3.0), 3.0, 0.5, grid=g_S1)
    assert res.status in ("ceiling_hit", "max_iters")


# ------------------------------------------------------------ blow-up probe

def test_ode_step_exact():
    u, sing = S.ode_step(np.array([1.0, 0.5]), 3.0, 0.1)
    assert np.allclose(u, (np.array([1.0, 0.5]) ** -2 - 0.2) ** -0.5)
    assert not sing.any()
    assert S.ode_step(np.array([1.0]), 3.0, 0.6)[1].all()


@pytest.fixture(scope="module")
def circle_blowups(S1, g_S1):
    fine = S.IterationConfig(dt=5e-4)
    return (S.blowup_probe(S1, np.ones(g_S1.n), 3.0, 2.0, grid=g_S1),
            S.blowup_probe(S1, np.ones(g_S1.n), 3.0, 2.0, cfg=fine, grid=g_S1))


def test_blowup_constant_circle(circle_blowups):
    res, _ = circle_blowups
    assert res.blown and abs(res.time - 0.5) <= 0.025


def test_blowup_splitting_consistency(circle_blowups):
    a, b = circle_blowups
    assert abs(a.time - b.time) / a.time < 0.05


def test_blowup_zero_and_tiny_data(R1, g_R1, S1, g_S1):
    assert not S.blowup_probe(S1, np.zeros(g_S1.n), 3.0, 1.0, grid=g_S1).blown
    u0 = 0.01 * np.exp(-g_R1.r ** 2)
    res = S.blowup_probe(R1, u0, 2.0, 1.0, grid=g_R1)
    assert not res.blown and res.time == 1.0


# ------------------------------------------------------------ threshold bisection

def test_threshold_bisect_ode_threshold(S1, g_S1):
    # blows up by T = 0.5 iff C^{-2}/2 <= 0.5 iff C >= 1
    cl = S.profile_classifier(S1, lambda C: np.full(g_S1.n, C), 3.0, 0.5, grid=g_S1)
    assert not cl(0.0)
    br = S.threshold_bisect(cl, 0.5, 2.0, rtol=1e-2)
    assert br.monotone and br.rel_width <= 1e-2
    assert br.lo * 0.99 <= 1.0 <= br.hi * 1.01


def test_threshold_bisect_rejects_bad_bracket():
    with pytest.raises(ValueError):
        S.threshold_bisect(lambda C: C > 5.0, 0.0, 1.0)


# ------------------------------------------------------------ initial trace

def test_trace_of_zero(g_R1):
    assert not np.any(S.initial_trace(g_R1, np.zeros((4, g_R1.n)), lambda r: np.exp(-r ** 2)))


def test_trace_dirac_converges(R1):
    from fujitalab.acceptance import trace_pairings
    tk, pair, target, res = trace_pairings(R1, dirac(R1, 0.1))
    assert target == pytest.approx(0.1)
    rel = np.abs(pair - target) / target
    assert rel[-1] <= 1e-3 and rel[-1] < rel[0]


# ------------------------------------------------------------ test function

@given(a=st.floats(0, 10), b=st.floats(0, 10), p=st.floats(1.1, 6.0))
def test_young_inequality(a, b, p):
    C = S.young_constant(p)
    q = p / (p - 1)
    assert 2 * q * a * b <= a ** p + C * b ** q + 1e-9 * (1 + a ** p + b ** q)


@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
def test_young_constant_sharp(p):
    # equality at a^{p-1} = 2b/(p-1): the constant cannot be lowered
    b = 1.0
    a = (2 * b / (p - 1)) ** (1 / (p - 1))
    q = p / (p - 1)
    assert 2 * q * a * b == pytest.approx(a ** p + S.young_constant(p) * b ** q, rel=1e-12)


def test_test_function_zero_and_dirac(R1):
    rep = S.test_function_defect(R1, 0.5, 1.0, 3.0, zero_measure(R1))
    assert rep.lhs == 0.0 and rep.passed and rep.rhs > 0
    rep = S.test_function_defect(R1, 0.5, 1.0, 3.0, dirac(R1, 0.7))
    assert rep.lhs == pytest.approx(0.7) and math.isfinite(rep.rhs)


@pytest.mark.parametrize("N,p", [(1, 3.0), (2, 3.0), (1, 5.0)])
def test_test_function_euclidean_scaling(N, p):
    M = make_manifold("euclidean", N)
    g = N - 2 / (p - 1)
    vals = [S.test_function_parts(M, rho, p) / rho ** g for rho in (0.05, 0.2, 0.8)]
    assert np.allclose(vals, vals[0], rtol=1e-10)


def test_test_function_sphere_stable():
    M = make_manifold("sphere", 2, 1.0)
    p = 3.0
    vals = np.array([S.test_function_parts(M, rho, p) / rho ** (2 - 2 / (p - 1))
                     for rho in np.linspace(0.05, 0.75, 8)])
    assert np.max(vals) / np.min(vals) < 1.5


def test_test_function_domain(R1):
    from fujitalab.geometry import DomainError
    with pytest.raises(DomainError):
        S.test_function_defect(R1, 2.0, 1.0, 3.0, zero_measure(R1))
