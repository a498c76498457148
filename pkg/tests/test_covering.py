import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fujitalab import covering as cov
from fujitalab.geometry import DomainError, geodesic_distance, make_manifold, origin


# ------------------------------------------------------------------ separated sets


@pytest.mark.parametrize("w", [2.0, 1.0, 0.5, 1 / 6])
def test_dis_line_is_two(w):
    # [TRIVIAL] S^0 = {-1, 1}
    assert cov.dis_greedy(1, w).count == 2


@pytest.mark.parametrize("w", [2.0, math.sqrt(2), 1.0, 0.5])
def test_dis_circle_matches_regular_polygon(w):
    # [DERIVED] on S^1 the maximum is floor(pi / asin(w/2)) (regular polygon)
    s = cov.dis_greedy(2, w)
    assert s.count == math.floor(math.pi / math.asin(w / 2) + 1e-9)
    assert s.min_distance() >= w * (1 - 1e-9)


def test_dis_antipodal_pair_in_3d():
    assert cov.dis_greedy(3, 2.0).count == 2


def test_dis_monotone_in_w():
    counts = [cov.dis_greedy(2, w).count for w in (0.2, 0.4, 0.8, 1.6)]
    assert counts == sorted(counts, reverse=True)


def test_dis_sphere_set_is_separated():
    s = cov.dis_greedy(3, 1.0, restarts=2)
    # greedy is a lower estimate; 12 is the kissing number
    assert 6 <= s.count <= 12 and s.min_distance() >= 1.0 * (1 - 1e-9)
    assert np.allclose(np.linalg.norm(s.points, axis=1), 1.0)


def test_dis_rejects_bad_width():
    with pytest.raises(ValueError):
        cov.dis_greedy(2, 0.0)
    with pytest.raises(ValueError):
        cov.dis_greedy(2, 2.5)


# ------------------------------------------------------------------ point charts


@pytest.mark.parametrize("key", ["S2", "H2", "H3", "S3", "R2"])
def test_point_chart_is_normal_at_a(models, key):
    M = models[key]
    rng = np.random.default_rng(1)
    a = cov.PointChart(M, origin(M)).exp(rng.uniform(-0.4, 0.4, M.dim))
    ch = cov.PointChart(M, a)
    v = rng.uniform(-0.5, 0.5, (20, M.dim))
    x = ch.exp(v)
    assert np.allclose(geodesic_distance(M, x, a), np.linalg.norm(v, axis=1), atol=1e-12)
    assert np.allclose(ch.log(x), v, atol=1e-10)


# ------------------------------------------------------------------ packings


@pytest.mark.parametrize("key", ["R2", "S2", "H2"])
def test_packing_certificate(models, key):
    M = models[key]
    pk = cov.pac_greedy(M, origin(M), 0.5, n_candidates=2048, restarts=2)
    cert = pk.certificate()
    assert cert["ok"] and cert["separation"] == 0.25
    assert 1 < cert["count"] <= cert["bound"] == cov.packing_bound(2) == 100
    assert np.all(geodesic_distance(M, pk.points, origin(M)) < 0.5)


def test_packing_off_origin_on_sphere(models):
    M = models["S2"]
    a = cov.PointChart(M, origin(M)).exp(np.array([0.7, -0.3]))
    pk = cov.pac_greedy(M, a, 0.5, n_candidates=1024, restarts=1)
    assert np.all(geodesic_distance(M, pk.points, a) < 0.5)
    assert pk.certificate()["ok"]


def test_packing_bound_values():
    # [TRIVIAL] 2^{2N-2} 5^N
    assert [cov.packing_bound(N) for N in (1, 2, 3)] == [5, 100, 2000]


def test_packing_radius_limit(models):
    assert cov.packing_radius_limit(models["S2"]) == pytest.approx(0.8 * math.pi / 2)
    assert cov.packing_radius_limit(models["S1"]) == pytest.approx(0.8 * math.pi)
    assert math.isinf(cov.packing_radius_limit(models["H2"]))
    with pytest.raises(DomainError):
        cov.pac_greedy(models["S2"], origin(models["S2"]), 1.3)


def test_packing_in_line_is_small(models):
    M = models["R1"]
    pk = cov.pac_greedy(M, origin(M), 1.0, n_candidates=512, restarts=2)
    assert pk.count <= cov.packing_bound(1)


# ------------------------------------------------------------------ half-ball covers


def test_half_ball_cover_line(models):
    M = models["R1"]
    c = cov.half_ball_cover(M, origin(M), 1.0, n_samples=2000)
    assert c.covered == c.samples and c.count <= 5
    assert c.max_gap < 0.5


def test_half_ball_cover_plane_and_maximality(models, tmp_path):
    M = models["R2"]
    c = cov.half_ball_cover(M, origin(M), 1.0, n_samples=4000, audit_csv=tmp_path / "audit.csv")
    assert c.covered == c.samples == 4000
    assert c.count <= cov.packing_bound(2)
    assert c.packing.min_pair_distance >= 0.5 * (1 - 1e-12)
    _, pts = cov.ball_samples(M, origin(M), 1.0, 4000, 0)
    assert cov.greedy_is_maximal(c.packing, pts)
    assert (tmp_path / "audit.csv").read_text().count("\n") == 4001


def test_half_ball_cover_sphere(models):
    M = models["S2"]
    c = cov.half_ball_cover(M, origin(M), 0.5, n_samples=2000)
    assert c.covered == c.samples and c.count <= 100


def test_greedy_is_maximal_detects_gap(models):
    M = models["R2"]
    pk = cov.pac_greedy(M, origin(M), 1.0, n_candidates=256, restarts=1)
    far = np.array([[5.0, 5.0]])
    assert not cov.greedy_is_maximal(pk, far)


# ------------------------------------------------------------------ partitions


def test_besicovitch_constant(models):
    assert cov.besicovitch_constant(models["R2"], 0.3) == 2.0
    assert cov.besicovitch_constant(models["S1"], 0.3) == 2.0
    assert cov.besicovitch_constant(models["S2"], 0.3) == pytest.approx(2 * math.sinh(0.3) / 0.3)
    assert cov.besicovitch_constant(models["H3"], 0.3) == pytest.approx(2 * math.sinh(0.3) / 0.3)


def test_single_ball_one_subfamily(models):
    M = models["R2"]
    F = cov.BallFamily(M, [[0.0, 0.0]], [0.1])
    P = cov.besicovitch_partition(M, F, 1.0)
    assert P.count == 1 and P.verify_disjoint() and P.covers_centers()


def test_partition_plane_500_balls(models):
    M = models["R2"]
    F = cov.random_family(M, 500, 0.05, 0.2, 1.0, seed=3)
    P = cov.besicovitch_partition(M, F, 0.5, seed=3)
    assert P.verify_disjoint() and P.covers_centers()
    assert P.count <= P.bound == 2 * P.zeta + 1


@given(st.integers(0, 10_000))
def test_partition_line_at_most_five(seed):
    M = make_manifold("euclidean", 1)
    F = cov.random_family(M, 40, 0.05, 0.45, 1.0, seed=seed)
    P = cov.besicovitch_partition(M, F, 1.0, seed=seed)
    assert P.count <= 5 and P.verify_disjoint() and P.covers_centers()


def test_partition_without_selection_colours_everything(models):
    M = models["S2"]
    F = cov.random_family(M, 60, 0.02, 0.1, 0.5, seed=1)
    P = cov.besicovitch_partition(M, F, 0.4, select=False)
    assert np.all(P.labels >= 0) and P.verify_disjoint()


def test_partition_domain_checks(models):
    M = models["R2"]
    F = cov.BallFamily(M, [[0.0, 0.0], [1.0, 0.0]], [0.1, 0.3])
    with pytest.raises(DomainError):
        cov.besicovitch_partition(M, F, 0.5)
    with pytest.raises(DomainError):
        cov.besicovitch_partition(models["S2"], cov.BallFamily(models["S2"], [[0, 0, 1.0]], [0.1]), 2.0)
    with pytest.raises(ValueError):
        cov.BallFamily(M, [[0.0, 0.0]], [0.0])


# ------------------------------------------------------------------ width


def test_width_collinear_is_zero(models):
    M = models["S2"]
    ch = cov.PointChart(M, origin(M))
    a, b, c = ch.exp(np.zeros(2)), ch.exp(np.array([0.9, 0.0])), ch.exp(np.array([0.4, 0.0]))
    assert cov.width_eval(M, a, b, c) == pytest.approx(0.0, abs=1e-7)


@given(st.floats(0.1, 3.0), st.floats(0.0, 2 * math.pi), st.floats(1.0, 3.0))
def test_width_euclidean_formula(r, th, stretch):
    # [DERIVED] |r u_b - c| / r with c at distance r from a = 0
    M = make_manifold("euclidean", 2)
    c = r * np.array([math.cos(th), math.sin(th)])
    b = np.array([r * stretch, 0.0])
    assert cov.width_eval(M, np.zeros(2), b, c) == pytest.approx(np.linalg.norm(np.array([r, 0.0]) - c) / r,
                                                                   rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("key,sign", [("S2", -1), ("H2", 1)])
def test_width_perpendicular_curved(models, key, sign):
    # [DERIVED] spherical / hyperbolic law of cosines at a right angle
    M = models[key]
    r = math.pi / 4
    ch = cov.PointChart(M, origin(M))
    a, b, c = origin(M), ch.exp(np.array([r, 0.0])), ch.exp(np.array([0.0, r]))
    d = math.acos(math.cos(r) ** 2) if key == "S2" else math.acosh(math.cosh(r) ** 2)
    w = cov.width_eval(M, a, b, c)
    assert w == pytest.approx(d / r, rel=1e-9)
    assert sign * (w - math.sqrt(2)) > 0


def test_width_domain(models):
    M = models["R2"]
    with pytest.raises(DomainError):
        cov.width_eval(M, np.zeros(2), np.array([0.5, 0.0]), np.array([0.0, 1.0]))
    with pytest.raises(DomainError):
        cov.width_eval(M, np.zeros(2), np.zeros(2), np.array([0.0, 1.0]))
