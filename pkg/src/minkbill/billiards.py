"""
(K, T)-billiard trajectories: momenta, Lagrange residuals, normal-hull
certificates and the forward bounce map.

Momentum convention: ``p_i`` is the maximiser of ``<p, q_{i+1} - q_i>`` over
T (the variational momentum of edge ``i``). With this choice the reflection
law reads ``lambda_i n_K(q_i) = p_{i-1} - p_i``. The flow momentum that moves
``q`` with velocity ``-grad g_T(p)`` is its antipode, ``-p_i``.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics
from .bodies import NotSmoothError
from .config import DEFAULT_TOL, ToleranceConfig


class GlidingOnset(RuntimeError):
    """Ray is tangent to the table (or hits a corner); the orbit may glide."""

    def __init__(self, message, q=None, p=None):
        super().__init__(message)
        self.q, self.p = q, p


class NotInNormalHullError(ValueError):
    pass


@dataclass
class BilliardTrajectory:
    """Closed polygon ``q_1 .. q_m`` on bd K with momenta on bd T."""

    bounce_points: np.ndarray
    momenta: np.ndarray
    multipliers: np.ndarray
    length: float

    @property
    def m(self):
        return len(self.bounce_points)


@dataclass
class CriticalityReport:
    residuals: np.ndarray
    multipliers: np.ndarray
    normal_sum: np.ndarray

    @property
    def max_residual(self):
        return float(np.linalg.norm(self.residuals, axis=1).max())

    def passes(self, tol=DEFAULT_TOL.criticality_tol, lam_floor=-1e-8):
        return (self.max_residual <= tol and self.multipliers.min() >= lam_floor
                and np.linalg.norm(self.normal_sum) <= tol)


def _require_strictly_convex(T):
    if not T.strictly_convex:
        raise NotSmoothError(f"momenta need a strictly convex T, got {type(T).__name__}")


def edge_momenta(K, T, bounce_points):
    """``p_i = argmax_{p in T} <p, q_{i+1} - q_i>`` for each cyclic edge."""
    _require_strictly_convex(T)
    q = np.atleast_2d(np.asarray(bounce_points, dtype=float))
    edges = np.roll(q, -1, axis=0) - q
    if np.any(np.linalg.norm(edges, axis=1) == 0):
        raise ValueError("zero edge vector: consecutive bounce points coincide")
    return np.atleast_2d(T.support_point(edges))


def make_trajectory(K, T, bounce_points) -> BilliardTrajectory:
    q = np.atleast_2d(np.asarray(bounce_points, dtype=float))
    p = edge_momenta(K, T, q)
    edges = np.roll(q, -1, axis=0) - q
    length = float(np.sum(T.support(edges)))
    rep = criticality_residual(K, T, q, p)
    return BilliardTrajectory(q, p, rep.multipliers, length)


def criticality_residual(K, T, bounce_points, momenta=None) -> CriticalityReport:
    """Least-squares multipliers and residuals of ``p_{i-1} - p_i = lambda_i n_K(q_i)``.

    ``bounce_points`` may also be a :class:`BilliardTrajectory`.
    """
    if isinstance(bounce_points, BilliardTrajectory):
        momenta = bounce_points.momenta
        bounce_points = bounce_points.bounce_points
    q = np.atleast_2d(np.asarray(bounce_points, dtype=float))
    p = edge_momenta(K, T, q) if momenta is None else np.atleast_2d(momenta)
    n = np.atleast_2d(K.normal(q))
    jump = np.roll(p, 1, axis=0) - p
    lam = np.sum(jump * n, axis=1) / np.sum(n * n, axis=1)
    res = jump - lam[:, None] * n
    return CriticalityReport(res, lam, lam @ n)


def normal_hull_certificate(K, bounce_points, config: ToleranceConfig = DEFAULT_TOL):
    """Convex weights ``mu`` with ``sum mu_i n_K(q_i) = 0``.

    Raises
    ------
    NotInNormalHullError
        When 0 is not in the hull of the normals.
    """
    if not K.smooth:
        raise NotSmoothError("normal hull needs a smooth table")
    q = np.atleast_2d(np.asarray(bounce_points, dtype=float))
    cert = numerics.conv_membership(np.atleast_2d(K.gauge_gradient(q)), np.zeros(K.dim), config)
    if not cert.member:
        raise NotInNormalHullError(
            f"0 is not in the hull of the {len(q)} normals (residual {cert.residual:.2e})")
    return cert


# ---------------------------------------------------------------------------
# forward dynamics
# ---------------------------------------------------------------------------

def _exit_parameter(body, start, direction, config, tangent_tol):
    """Positive ``t`` with ``g(start + t d) = 1`` for ``start`` on bd(body)."""
    n = body.gauge_gradient(start)
    cosang = float(n @ direction) / (np.linalg.norm(n) * np.linalg.norm(direction))
    if cosang > -tangent_tol:
        raise GlidingOnset(f"direction does not enter the body (cos = {cosang:.3e})")
    hi = 2.0 / float(body.gauge(direction)) * (1 + 1e-9)

    def phi(t):
        return float(body.gauge(start + t * direction)) - 1.0

    def dphi(t):
        return float(body.gauge_gradient(start + t * direction) @ direction)

    lo = hi / 2
    for _ in range(80):
        if phi(lo) < 0:
            break
        lo /= 2
    else:
        raise GlidingOnset("could not bracket the exit point; near-tangent ray")
    try:
        return numerics.root_on_ray(phi, (lo, hi), dphi, xtol=config.root_xtol)
    except numerics.NoSignChangeError as exc:
        raise GlidingOnset(str(exc)) from exc


def bounce_map(K, T, q, p, config: ToleranceConfig = DEFAULT_TOL, tangent_tol=1e-9):
    """One proper bounce of the (K, T)-billiard flow.

    Moves ``q`` along ``-grad g_T(p)`` to the next boundary point ``q'`` of K,
    then moves ``p`` along ``grad g_K(q')`` across T to ``p'``. Here ``p`` is the
    flow momentum (not the variational one).

    Raises
    ------
    GlidingOnset
        If either ray fails to enter its body.
    """
    for body in (K, T):
        if not body.smooth:
            raise NotSmoothError("bounce_map needs smooth strictly convex bodies")
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    d = -T.gauge_gradient(p)
    try:
        t = _exit_parameter(K, q, d, config, tangent_tol)
    except GlidingOnset as exc:
        raise GlidingOnset(str(exc), q, p) from None
    q1 = K.boundary_point(q + t * d)
    nu = K.gauge_gradient(q1)
    try:
        s = _exit_parameter(T, p, nu, config, tangent_tol)
    except GlidingOnset as exc:
        raise GlidingOnset(f"corner hit: {exc}", q1, p) from None
    p1 = T.boundary_point(p + s * nu)
    return q1, p1


@dataclass
class Orbit:
    points: np.ndarray
    momenta: np.ndarray
    gliding: bool
    message: str = ""


def trace(K, T, q0, p0, bounces, config: ToleranceConfig = DEFAULT_TOL) -> Orbit:
    """Iterate :func:`bounce_map`; stops early (``gliding=True``) at a tangency."""
    qs, ps = [np.asarray(q0, float)], [np.asarray(p0, float)]
    for _ in range(bounces):
        try:
            q, p = bounce_map(K, T, qs[-1], ps[-1], config)
        except GlidingOnset as exc:
            return Orbit(np.array(qs), np.array(ps), True, str(exc))
        qs.append(q)
        ps.append(p)
    return Orbit(np.array(qs), np.array(ps), False)


def reflection_angle_error(K, q_hit, d_in, d_out):
    """Angle between ``d_out`` and the Euclidean mirror image of ``d_in`` at ``q_hit``."""
    n = K.gauge_gradient(q_hit)
    n = n / np.linalg.norm(n)
    a = np.asarray(d_in, float) / np.linalg.norm(d_in)
    b = np.asarray(d_out, float) / np.linalg.norm(d_out)
    expected = a - 2 * (a @ n) * n
    # chord form keeps precision for tiny angles
    return float(2 * np.arcsin(min(1.0, np.linalg.norm(expected - b) / 2)))
