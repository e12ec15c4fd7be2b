import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minkbill import numerics
from minkbill.config import DEFAULT_TOL, ToleranceConfig, worker_count


# --- config -----------------------------------------------------------------

def test_tolerances_must_be_positive():
    with pytest.raises(ValueError):
        ToleranceConfig(search_tol=0.0)
    with pytest.raises(ValueError):
        ToleranceConfig(mc_ci_level=1.0)
    assert DEFAULT_TOL.override(merge_tol=1e-7).merge_tol == 1e-7


def test_worker_count_respects_env_cap(monkeypatch):
    monkeypatch.delenv("MINKBILL_THREADS", raising=False)
    assert worker_count() == 1
    assert worker_count(4) == 4
    monkeypatch.setenv("MINKBILL_THREADS", "2")
    assert worker_count(8) == 2
    assert worker_count() == 2
    monkeypatch.setenv("MINKBILL_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()


# --- rng --------------------------------------------------------------------

def test_rng_streams_are_keyed_and_reproducible():
    a = numerics.rng_stream(7, 1, 2).standard_normal(5)
    b = numerics.rng_stream(7, 1, 2).standard_normal(5)
    c = numerics.rng_stream(7, 2, 1).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_random_directions_are_unit():
    d = numerics.random_directions(numerics.rng_stream(0), 100, 4)
    assert d.shape == (100, 4)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)


# --- hull membership --------------------------------------------------------

def test_symmetric_cross_contains_origin_with_reduced_certificate():
    P = np.array([[1, 0], [-1, 0], [0, 1], [0, -1.0]])
    cert = numerics.conv_membership(P, np.zeros(2))
    assert cert.member and bool(cert)
    assert cert.residual <= 1e-9
    assert np.count_nonzero(cert.weights) <= 3
    assert abs(cert.weights.sum() - 1) <= 1e-12
    assert np.all(cert.weights >= 0)


def test_separated_target_is_not_member():
    cert = numerics.conv_membership(np.eye(2), np.array([-1.0, 0.0]))
    assert not cert.member


def test_certificate_verifies_by_substitution():
    rng = numerics.rng_stream(3)
    for _ in range(50):
        k, n = int(rng.integers(1, 12)), int(rng.integers(1, 6))
        P = rng.standard_normal((k, n))
        w = rng.exponential(size=k)
        w /= w.sum()
        t = w @ P
        cert = numerics.conv_membership(P, t)
        assert cert.member
        assert np.linalg.norm(cert.weights @ P - t) <= 1e-9
        assert np.count_nonzero(cert.weights) <= n + 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_nnls_verdict_matches_lp_oracle(seed):
    rng = numerics.rng_stream(seed, 99)
    k, n = int(rng.integers(2, 9)), int(rng.integers(2, 5))
    P = rng.standard_normal((k, n))
    t = rng.standard_normal(n) * 0.7
    cert = numerics.conv_membership(P, t)
    _, lp_res = numerics.conv_membership_lp(P, t)
    if lp_res > 1e-6:
        assert not cert.member
    elif lp_res < 1e-12:
        assert cert.residual <= 1e-8


def test_caratheodory_keeps_the_combination():
    rng = numerics.rng_stream(11)
    P = rng.standard_normal((9, 3))
    w = rng.exponential(size=9)
    w /= w.sum()
    r = numerics.caratheodory_reduce(P, w)
    assert np.count_nonzero(r) <= 4
    assert np.allclose(r @ P, w @ P, atol=1e-12)
    assert abs(r.sum() - 1) < 1e-12


# --- local search -----------------------------------------------------------

def test_quadratic_bowl_minimum():
    c = np.array([0.3, -1.2, 2.0])
    res = numerics.minimize_local(lambda x: float(np.sum((x - c) ** 2)), np.zeros(3), xtol=1e-10)
    assert res.converged
    assert np.linalg.norm(res.point - c) <= 1e-8


def test_sphere_search_finds_support_direction():
    target = np.array([1.0, 2.0, -2.0]) / 3
    res = numerics.minimize_local(lambda u: -float(u @ target), np.array([1.0, 0, 0]),
                                  [slice(0, 3)])
    assert np.linalg.norm(res.point - target) <= 1e-8
    assert abs(np.linalg.norm(res.point) - 1) < 1e-15


def test_local_search_is_bit_deterministic():
    f = lambda u: float(np.sin(3 * u[0]) + u[1] ** 2 + 0.1 * u[2])
    a = numerics.minimize_local(f, np.array([0.2, 0.5, 0.8]), [slice(0, 3)])
    b = numerics.minimize_local(f, np.array([0.2, 0.5, 0.8]), [slice(0, 3)])
    assert a.point.tobytes() == b.point.tobytes() and a.value == b.value


def test_multistart_two_well_calibration():
    # global minimum at x = -1 (depth -0.3 deeper than x = +1)
    f = lambda x: float((x[0] ** 2 - 1) ** 2 + 0.3 * x[0] + x[1] ** 2)
    hits = 0
    for seed in range(64):
        rng = numerics.rng_stream(seed, 5)
        starts = list(rng.uniform(-2, 2, size=(8, 2)))
        best, _ = numerics.multistart(f, starts, xtol=1e-9)
        hits += best.point[0] < 0
    assert hits >= 63


def test_budget_exhaustion_reports_unconverged():
    res = numerics.minimize_local(lambda x: float(np.sum(x ** 2)), np.ones(4), max_evals=20)
    assert not res.converged
    assert res.value <= 4.0


def test_stop_predicate_ends_search_early():
    res = numerics.minimize_local(lambda x: float(np.sum(x ** 2)), np.ones(2),
                                  stop=lambda x: np.linalg.norm(x) < 0.5, stop_every=1)
    assert res.stopped
    assert np.linalg.norm(res.point) < 0.5


def test_sphere_gradient_polish_reaches_machine_precision():
    A = np.diag([1.0, 2.0, 3.0])
    f = lambda u: float(u @ A @ u / (u @ u))
    grad = lambda u: 2 * (A @ u - f(u) * u) / (u @ u)
    u = numerics.sphere_gradient_polish(f, grad, np.array([1.0, 0.05, 0.02]))
    assert abs(f(u) - 1.0) < 1e-14


# --- roots and derivatives --------------------------------------------------

def test_root_on_ray_quadratic():
    r = numerics.root_on_ray(lambda t: t * t - 1, (0, 2), lambda t: 2 * t)
    assert abs(r - 1) <= 1e-13


def test_root_on_ray_double_root_has_no_sign_change():
    with pytest.raises(numerics.NoSignChangeError):
        numerics.root_on_ray(lambda t: (t - 1) ** 2, (0, 2))


def test_root_on_gauge_ray_hits_boundary():
    from minkbill import bodies as B
    K = B.lp_ball(3, 3)
    x0, d = np.array([0.1, -0.2, 0.3]), np.array([1.0, 0.5, -0.25])
    t = numerics.root_on_ray(lambda s: float(K.gauge(x0 + s * d)) - 1, (0, 10),
                             lambda s: float(K.gauge_gradient(x0 + s * d) @ d))
    assert abs(K.gauge(x0 + t * d) - 1) <= 1e-11


def test_finite_diff_check_detects_wrong_gradient():
    f = lambda x: float(x @ x)
    assert numerics.finite_diff_check(f, lambda x: 2 * x, np.ones((3, 2))) < 1e-8
    assert numerics.finite_diff_check(f, lambda x: x, np.ones((3, 2))) > 0.1


def test_tangent_basis_is_orthonormal_complement():
    for c in ([0.0, 0, 1], [-1.0, 0], [3.0, -4, 1, 2]):
        c = np.array(c)
        Bm = numerics._tangent_basis(c)
        assert np.allclose(Bm.T @ Bm, np.eye(len(c) - 1), atol=1e-14)
        assert np.allclose(c @ Bm, 0, atol=1e-14)


def test_membership_survives_a_wrong_nnls_answer():
    # scipy's nnls returns rnorm = 0 with a non-solution on this input
    P = np.array([[-1.3212891, 0.44380717], [1.50963301, -0.36624683],
                  [-1.77426758, 0.01147323], [1.94682623, 0.1538791], [0.0, 0.0]])
    w = np.array([0.20929009, 0.40004007, 0.28721616, 0.06843454, 0.03501914])
    P[-1] = -(w[:-1] @ P[:-1]) / w[-1]
    cert = numerics.conv_membership(P, np.zeros(2))
    assert cert.member and cert.residual <= 1e-9
