import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from minkbill import bodies as B
from minkbill import numerics

rng0 = numerics.rng_stream(2024)
GENERIC = rng0.standard_normal((3, 3)) + 2 * np.eye(3)

SMOOTH = {
    "disk": B.unit_ball(2),
    "ellipse": B.ellipsoid([2.0, 0.5]),
    "ellipsoid3": B.Ellipsoid(GENERIC),
    "l3": B.lp_ball(2, 3),
    "l1.5_image": B.LpBall(GENERIC, 1.5),
    "hex_s8": B.smooth(B.regular_polygon(6), 8),
    "powersum3": B.PowerSum(rng0.standard_normal((5, 3)), 4),
    "polar_powersum": B.smooth(B.regular_polygon(8), 6).polar(),
}
POLYTOPES = {
    "square": B.cube(2),
    "cross3": B.cross_polytope(3),
    "hrandom": B.HPolytope(rng0.standard_normal((5, 3))),
    "vrandom": B.VPolytope(rng0.standard_normal((4, 3))),
}
ALL = {**SMOOTH, **POLYTOPES}


# --- documented values ------------------------------------------------------

def test_gauge_values():
    assert B.cube(2).gauge([0.5, -0.25]) == pytest.approx(0.5)
    assert B.unit_ball(2).gauge([3, 4]) == pytest.approx(5)
    V = B.VPolytope([[1, 0], [0, 1]])
    assert V.gauge([0.5, 0.5]) == pytest.approx(1.0)
    assert V.gauge_lp([0.5, 0.5]) == pytest.approx(1.0)


def test_support_values():
    assert B.cross_polytope(2).support([3, 4]) == pytest.approx(4)
    assert B.unit_ball(2).support([3, 4]) == pytest.approx(5)
    assert B.ellipsoid([2, 0.5]).support([1, 0]) == pytest.approx(2)


def test_support_points():
    assert_allclose(B.unit_ball(2).support_point([0, 2]), [0, 1], atol=1e-15)
    assert_allclose(B.ellipsoid([2, 1]).support_point([1, 0]), [2, 0], atol=1e-15)
    c = 2 ** (-1 / 3)
    assert_allclose(B.lp_ball(2, 3).support_point([1, 1]), [c, c], atol=1e-14)
    assert_allclose(B.cube(2).support_point([2, 1]), [1, 1], atol=1e-12)


def test_gauge_gradients():
    assert_allclose(B.unit_ball(2).gauge_gradient([0.6, 0.8]), [0.6, 0.8], atol=1e-15)
    assert_allclose(B.ellipsoid([2, 1]).gauge_gradient([2, 0]), [0.5, 0], atol=1e-15)


def test_boundary_points():
    assert_allclose(B.cube(2).boundary_point([2, 1]), [1, 0.5])
    assert_allclose(B.unit_ball(2).boundary_point([3, 4]), [0.6, 0.8])


def test_polar_pairs():
    P = B.cube(3).polar()
    assert isinstance(P, B.VPolytope)
    X = rng0.standard_normal((20, 3))
    assert_allclose(P.gauge(X), B.cross_polytope(3).gauge(X), rtol=1e-12)
    disk = B.unit_ball(2).polar()
    assert_allclose(disk.matrix, np.eye(2))
    e = B.ellipsoid([2, 0.5]).polar()
    assert_allclose(e.matrix, np.diag([0.5, 2.0]))


def test_inradius_values():
    assert B.inradius_wrt(B.unit_ball(2, radius=2), B.unit_ball(2)) == pytest.approx(2, rel=1e-9)
    assert B.inradius_wrt(B.cube(2), B.cross_polytope(2)) == pytest.approx(1, rel=1e-9)
    K = B.ellipsoid([2.0, 1.0, 0.5])
    assert B.inradius_wrt(K, K) == pytest.approx(1, rel=1e-12)
    assert B.inradius_wrt(K, B.unit_ball(3)) == pytest.approx(0.5, rel=1e-10)
    r = B.find_inradius(B.cube(3), B.unit_ball(3))
    assert r.value == pytest.approx(1.0, rel=1e-9) and r.converged


# --- structural properties --------------------------------------------------

@pytest.mark.parametrize("name", ALL)
def test_duality_gauge_of_polar_is_support(name):
    K = ALL[name]
    U = numerics.random_directions(numerics.rng_stream(1), 200, K.dim)
    assert_allclose(K.polar().gauge(U), K.support(U), rtol=1e-9)
    assert_allclose(K.polar().support(U), K.gauge(U), rtol=1e-9)


@pytest.mark.parametrize("name", ALL)
def test_support_point_attains_support(name):
    K = ALL[name]
    U = numerics.random_directions(numerics.rng_stream(2), 50, K.dim)
    X = np.atleast_2d(K.support_point(U))
    assert_allclose(np.sum(X * U, axis=1), K.support(U), rtol=1e-9)
    assert np.all(K.gauge(X) <= 1 + 1e-9)


@pytest.mark.parametrize("name", ALL)
def test_boundary_point_lies_on_boundary(name):
    K = ALL[name]
    U = numerics.random_directions(numerics.rng_stream(3), 50, K.dim)
    assert_allclose(K.gauge(K.boundary_point(U)), 1.0, atol=1e-12)


@pytest.mark.parametrize("name", SMOOTH)
def test_gauge_gradient_matches_finite_differences(name):
    K = SMOOTH[name]
    X = numerics.rng_stream(4).standard_normal((10, K.dim))
    assert numerics.finite_diff_check(lambda x: float(K.gauge(x)), K.gauge_gradient, X) <= 1e-5


@pytest.mark.parametrize("name", SMOOTH)
def test_support_gradient_is_support_point(name):
    K = SMOOTH[name]
    X = numerics.rng_stream(5).standard_normal((10, K.dim))
    assert numerics.finite_diff_check(lambda u: float(K.support(u)), K.support_point, X) <= 1e-5


def test_disk_gradient_is_very_accurate():
    K = B.unit_ball(2)
    X = numerics.rng_stream(6).standard_normal((10, 2))
    assert numerics.finite_diff_check(lambda x: float(K.gauge(x)), K.gauge_gradient, X) <= 1e-7


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(ALL)), st.integers(0, 10 ** 6), st.floats(0.1, 10))
def test_gauge_is_a_symmetric_norm(name, seed, t):
    K = ALL[name]
    rng = numerics.rng_stream(seed)
    x, y = rng.standard_normal((2, K.dim))
    gx, gy = float(K.gauge(x)), float(K.gauge(y))
    assert float(K.gauge(t * x)) == pytest.approx(t * gx, rel=1e-9)
    assert float(K.gauge(-x)) == pytest.approx(gx, rel=1e-9)
    assert float(K.gauge(x + y)) <= gx + gy + 1e-9 * (gx + gy)


def test_vpolytope_facet_gauge_matches_lp():
    K = POLYTOPES["vrandom"]
    X = numerics.rng_stream(7).standard_normal((40, 3))
    assert_allclose(K.gauge(X), [K.gauge_lp(x) for x in X], rtol=1e-9)


def test_hpolytope_support_point_matches_lp():
    K = POLYTOPES["hrandom"]
    for u in numerics.rng_stream(8).standard_normal((10, 3)):
        assert float(u @ K.support_point(u)) == pytest.approx(
            float(u @ numerics.lp_support_point(K.functionals, u)), rel=1e-9)


def test_powersum_newton_matches_sphere_search():
    K = B.smooth(B.regular_polygon(6), 8)
    for u in numerics.random_directions(numerics.rng_stream(9), 5, 2):
        assert float(u @ K.support_point(u)) == pytest.approx(
            float(u @ K.support_point_search(u)), rel=1e-9)


def test_powersum_batch_matches_single():
    K = SMOOTH["powersum3"]
    U = numerics.rng_stream(10).standard_normal((30, 3))
    batch = K.support_point(U)
    single = np.array([K.support_point(u) for u in U])
    assert_allclose(np.sum(batch * U, 1), np.sum(single * U, 1), rtol=1e-13)


def test_powersum_below_two_uses_search():
    K = B.PowerSum(np.eye(2), 1.5)
    ref = B.lp_ball(2, 1.5)
    u = np.array([0.3, 0.8])
    assert float(u @ K.support_point(u)) == pytest.approx(float(ref.support(u)), rel=1e-9)


def test_smoothing_approaches_polytope():
    sq = B.cube(2)
    X = numerics.rng_stream(11).standard_normal((50, 2))
    gaps = [np.max(np.abs(B.smooth(sq, s).gauge(X) / sq.gauge(X) - 1)) for s in (4, 16, 64)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 2 ** (1 / 64) - 1 + 1e-12


def test_linear_image_and_scaling():
    K = B.LpBall(GENERIC, 3)
    M = numerics.rng_stream(12).standard_normal((3, 3)) + 3 * np.eye(3)
    x = numerics.rng_stream(13).standard_normal(3)
    assert float(K.linear_image(M).gauge(M @ x)) == pytest.approx(float(K.gauge(x)), rel=1e-12)
    assert float(K.scaled(2).gauge(x)) == pytest.approx(float(K.gauge(x)) / 2, rel=1e-12)
    P = SMOOTH["polar_powersum"]
    assert float(P.scaled(2).gauge(x[:2])) == pytest.approx(float(P.gauge(x[:2])) / 2, rel=1e-9)


def test_polytope_normals_need_facet_variant():
    with pytest.raises(B.NotSmoothError, match="facet"):
        B.cube(2).gauge_gradient([1.0, 0.5])
    # vertex (1, 1) ties two facets; the lower index wins
    n = B.cube(2).facet_normal([1.0, 1.0])
    assert_allclose(n, [1.0, 0.0])


def test_invalid_bodies_are_rejected():
    with pytest.raises(B.InvalidBodyError):
        B.HPolytope([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(B.InvalidBodyError):
        B.Ellipsoid(np.zeros((2, 2)))
    with pytest.raises(B.InvalidBodyError):
        B.LpBall(np.eye(2), 1.0)
    with pytest.raises(B.InvalidBodyError):
        B.cube(9)
    with pytest.raises(B.DimensionError):
        B.unit_ball(2).gauge([1.0, 2.0, 3.0])
