import numpy as np
import pytest
from numpy.testing import assert_allclose

from minkbill import bodies as B
from minkbill import capacity as C
from minkbill import numerics
from minkbill.billiards import criticality_residual


def test_two_bounce_closed_form_values():
    assert C.two_bounce_capacity(B.unit_ball(2, radius=2), B.unit_ball(2)).value == pytest.approx(8, rel=1e-9)
    assert C.two_bounce_capacity(B.unit_ball(2), B.unit_ball(2, radius=0.5)).value == pytest.approx(2, rel=1e-9)
    K = B.ellipsoid([2.0, 1.0, 0.5])
    assert C.two_bounce_capacity(K, K.polar()).value == pytest.approx(4, rel=1e-12)


def test_two_bounce_handles_polytopes():
    est = C.two_bounce_capacity(B.cube(2), B.cube(2).polar())
    assert est.value == pytest.approx(4, rel=1e-9)
    assert est.witness.m == 2


def test_two_bounce_gradient_matches_finite_differences():
    K, T = B.lp_ball(3, 3), B.ellipsoid([1.0, 2.0, 0.7])
    U = numerics.rng_stream(5).standard_normal((8, 3))
    err = numerics.finite_diff_check(lambda u: C.two_bounce_length(K, T, u),
                                     lambda u: C.two_bounce_gradient(K, T, u), U)
    assert err <= 1e-5


def test_merge_collapsed():
    pts = np.array([[1.0, 0], [1.0 + 1e-8, 0], [0, 1], [-1, 0]])
    assert len(C.merge_collapsed(pts, 1e-6)) == 3
    # wrap-around pair
    pts = np.array([[1.0, 0], [0, 1], [-1, 0], [1.0, 1e-9]])
    assert len(C.merge_collapsed(pts, 1e-6)) == 3
    assert len(C.merge_collapsed(np.array([[1.0, 0], [1.0, 0]]), 1e-6)) == 2


def test_polygon_map_puts_zero_in_normal_hull():
    K = B.LpBall(np.diag([1.0, 2.0, 0.5]), 3)
    for m in (2, 3, 4, 5):
        pmap = C._PolygonMap(K, m)
        for i in range(5):
            v = pmap.random_start(numerics.rng_stream(9, m, i))
            q = pmap.points(v)
            assert q.shape == (m, 3)
            assert_allclose(K.gauge(q), 1.0, atol=1e-12)
            N = K.gauge_gradient(q)
            N = N / np.linalg.norm(N, axis=1)[:, None]
            assert numerics.conv_membership(N, np.zeros(3)).member


def test_search_finds_disk_diameter():
    est = C.shortest_trajectory(B.unit_ball(2), B.unit_ball(2), m_max=3, starts=8)
    assert est.value == pytest.approx(4, rel=1e-9)
    assert est.witness.m == 2
    assert est.diagnostics["residual_max"] <= 1e-6


def test_search_is_reproducible():
    K, T = B.ellipsoid([1.5, 1.0]), B.lp_ball(2, 3)
    a = C.shortest_trajectory(K, T, m_max=3, starts=6, seed=4)
    b = C.shortest_trajectory(K, T, m_max=3, starts=6, seed=4)
    assert a.value == b.value
    assert a.witness.bounce_points.tobytes() == b.witness.bounce_points.tobytes()


def test_search_rejects_polytopes_and_bad_branch_counts():
    with pytest.raises(B.NotSmoothError):
        C.shortest_trajectory(B.cube(2), B.unit_ball(2))
    with pytest.raises(ValueError):
        C.shortest_trajectory(B.unit_ball(2), B.unit_ball(2), m_max=9)


def test_hz_capacity_agrees_for_random_ellipse_pair():
    rng = numerics.rng_stream(3)
    K = B.Ellipsoid(rng.standard_normal((2, 2)) + 2 * np.eye(2))
    T = B.LpBall(rng.standard_normal((2, 2)) + 2 * np.eye(2), 2.5)
    est = C.hz_capacity(K, T, m_max=3, starts=8)
    assert est.status == "ok"
    assert est.diagnostics["relative_gap"] <= 1e-3
    rep = criticality_residual(K, T, est.witness)
    assert rep.passes(1e-6)


def test_disagreement_is_flagged_not_hidden(monkeypatch):
    real = C.two_bounce_capacity

    def skewed(*a, **k):
        est = real(*a, **k)
        est.value *= 1.01
        return est

    monkeypatch.setattr(C, "two_bounce_capacity", skewed)
    K = B.unit_ball(2)
    est = C.hz_capacity(K, K, m_max=2, starts=4)
    assert est.falsification_candidate
    assert est.value == pytest.approx(4, rel=1e-9)
    with pytest.raises(C.FalsificationCandidate) as info:
        C.hz_capacity(K, K, m_max=2, starts=4, strict=True)
    assert info.value.estimate.status == C.FALSIFICATION


@pytest.mark.slow
def test_smoothed_square_capacity_approaches_four():
    out = C.smoothed_capacity(B.cube(2), s_values=(8, 16), m_max=3, starts=8)
    assert abs(out["per_s"][16] - 4) <= 2e-2
    assert abs(out["extrapolated"] - 4) <= abs(out["per_s"][16] - 4) + 1e-9
