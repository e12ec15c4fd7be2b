"""
Norm lengths of closed polygonal paths and constructive versions of the
shortcut, antipodal-split and simplex-cover arguments, plus verifiers for the
two lower bounds ``Length_K >= 4``.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import minimize

from . import numerics
from .bodies import ConvexBody, NotSmoothError
from .config import DEFAULT_TOL, ToleranceConfig


class PreconditionError(ValueError):
    pass


class InternalConsistencyError(RuntimeError):
    """A construction that must succeed did not; indicates a bug upstream."""


@dataclass(frozen=True)
class PolygonalPath:
    """Closed polygon ``x_1 ... x_m`` (cyclic), consecutive points distinct."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 2:
            raise PreconditionError("a closed path needs at least 2 points")
        if np.any(np.all(pts == np.roll(pts, -1, axis=0), axis=1)):
            raise PreconditionError("consecutive points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def length(self, K):
        return path_length(K, self.points)


def path_length(K: ConvexBody, points) -> float:
    """``||x_1 - x_m||_K + sum_i ||x_{i+1} - x_i||_K``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != K.dim:
        raise ValueError(f"path is {pts.shape[1]}-d, body is {K.dim}-d")
    edges = np.roll(pts, -1, axis=0) - pts
    return float(np.sum(K.gauge(edges)))


def open_length(K, points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return float(np.sum(K.gauge(np.diff(pts, axis=0)))) if len(pts) > 1 else 0.0


def _check_convex_weights(weights, m, tol=1e-9):
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != m:
        raise PreconditionError(f"expected {m} weights, got {w.size}")
    if w.min() < -tol or abs(w.sum() - 1.0) > tol:
        raise PreconditionError("weights are not a convex combination")
    return np.clip(w, 0.0, None)


# ---------------------------------------------------------------------------
# shortcut
# ---------------------------------------------------------------------------

@dataclass
class ShortcutResult:
    lhs: float
    rhs: float
    z: np.ndarray
    d: np.ndarray | None
    collinearity_gap: float

    @property
    def margin(self):
        return self.lhs - self.rhs


def shortcut(K, points, weights, z=None) -> ShortcutResult:
    """Compare ``Length_K(x_1 ... x_m)`` with ``Length_K(x_1 z x_m)``.

    ``z = sum_j w_j x_j`` must be a convex combination of the points. The
    result also carries the intermediate point ``d`` of the inductive step
    (the combination of ``x_1 .. x_{m-1}`` with ``z`` on ``[x_m, d]``) and the
    gap in ``||x_m - d|| = ||x_m - z|| + ||d - z||``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if m < 2:
        raise PreconditionError("need at least 2 points")
    w = _check_convex_weights(weights, m)
    zc = w @ pts
    if z is not None and np.linalg.norm(np.asarray(z, dtype=float) - zc) > 1e-9:
        raise PreconditionError("z does not match the given weights")
    z = zc
    lhs = path_length(K, pts)
    rhs = float(K.gauge(z - pts[0]) + K.gauge(pts[-1] - z) + K.gauge(pts[0] - pts[-1]))
    wm = w[-1]
    if wm >= 1.0 - 1e-15:
        return ShortcutResult(lhs, rhs, z, None, 0.0)
    d = (w[:-1] / (1.0 - wm)) @ pts[:-1]
    gap = float(K.gauge(pts[-1] - d) - K.gauge(pts[-1] - z) - K.gauge(d - z))
    return ShortcutResult(lhs, rhs, z, d, gap)


# ---------------------------------------------------------------------------
# antipodal split
# ---------------------------------------------------------------------------

@dataclass
class AntipodalSplit:
    """``p`` in the hull of the arc ``i0 .. j0`` and ``-p`` in the hull of ``j0 .. i0-1``.

    Indices are 0-based and arcs run forward cyclically, so ``i0 > j0`` means
    the first arc wraps around.
    """

    i0: int
    j0: int
    p: np.ndarray
    arc_a: np.ndarray
    arc_b: np.ndarray
    coeffs_a: np.ndarray
    coeffs_b: np.ndarray
    residual_a: float = field(default=np.nan)
    residual_b: float = field(default=np.nan)


def antipodal_split(points, weights, tol=1e-9) -> AntipodalSplit:
    """Split a closed polygon with ``0 = sum eta_i x_i`` into two arcs with antipodal hull points.

    Follows the prefix rule: after a cyclic relabelling, ``j`` is the largest
    index with ``eta_1 + ... + eta_{j-1} <= 1/2``; ``eta_j`` is split so each
    side carries weight 1/2 and ``p = 2 (eta_j' x_j + sum_{i<j} eta_i x_i)``.
    The relabelling is the first rotation for which ``j`` is neither the first
    nor the last index, so each arc contains at least two points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if m < 3:
        raise PreconditionError("antipodal_split needs m >= 3 points")
    eta = _check_convex_weights(weights, m, tol)
    scale = max(1.0, float(np.abs(pts).max()))
    if np.linalg.norm(eta @ pts) > tol * scale:
        raise PreconditionError("weights do not satisfy sum eta_i x_i = 0")
    for r in range(m):
        order = (r + np.arange(m)) % m
        e = eta[order]
        prefix = np.concatenate([[0.0], np.cumsum(e)])  # prefix[k] = e[0] + ... + e[k-1]
        # 0-based j: largest with prefix[j] <= 1/2
        j = int(np.flatnonzero(prefix[:m] <= 0.5)[-1])
        if not 0 < j < m - 1:
            continue
        ej1 = min(max(0.5 - prefix[j], 0.0), e[j])
        ej2 = e[j] - ej1
        ca = np.concatenate([2 * e[:j], [2 * ej1]])
        cb = np.concatenate([[2 * ej2], 2 * e[j + 1:]])
        xa, xb = pts[order[:j + 1]], pts[order[j:]]
        p = ca @ xa
        split = AntipodalSplit(
            i0=int(order[0]), j0=int(order[j]), p=p,
            arc_a=order[:j + 1], arc_b=order[j:],
            coeffs_a=ca, coeffs_b=cb,
            residual_a=float(np.linalg.norm(ca @ xa - p) + abs(ca.sum() - 1.0)),
            residual_b=float(np.linalg.norm(cb @ xb + p) + abs(cb.sum() - 1.0)),
        )
        return split
    raise InternalConsistencyError("no cyclic relabelling gives an interior split index")


# ---------------------------------------------------------------------------
# simplex cover
# ---------------------------------------------------------------------------

def simplex_cover(x, q, config: ToleranceConfig = DEFAULT_TOL, validate=True):
    """Find ``I != {}`` with ``0 in conv({q_i}_{i in I} ∪ {x_j}_{j not in I})``.

    Parameters
    ----------
    x : array_like, shape (k+1, k)
        Vertices of a non-degenerate simplex containing the origin.
    q : array_like, shape (k+1, k)
        ``q_i`` in the facet opposite ``x_i``.

    Returns
    -------
    (tuple, HullMembershipCertificate)
        The 0-based index set, searched by increasing size, and its certificate
        over the mixed point list.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Q = np.atleast_2d(np.asarray(q, dtype=float))
    k1, k = X.shape
    if k1 != k + 1 or Q.shape != X.shape:
        raise PreconditionError("need k+1 vertices and k+1 facet points in R^k")
    origin = np.zeros(k)
    if validate:
        M = np.hstack([X, np.ones((k1, 1))])
        if abs(np.linalg.det(M)) < 1e-12:
            raise PreconditionError("degenerate simplex")
        if not numerics.conv_membership(X, origin, config):
            raise PreconditionError("origin is not in the simplex")
        for i in range(k1):
            others = np.delete(X, i, axis=0)
            if not numerics.conv_membership(others, Q[i], config):
                raise PreconditionError(f"q_{i} is not in the facet opposite x_{i}")
    for size in range(1, k1 + 1):
        for I in combinations(range(k1), size):
            mixed = X.copy()
            mixed[list(I)] = Q[list(I)]
            cert = numerics.conv_membership(mixed, origin, config)
            if cert.member:
                return I, cert
    raise InternalConsistencyError("no covering subset exists; hypotheses must be violated")


# ---------------------------------------------------------------------------
# length-bound verifiers
# ---------------------------------------------------------------------------

@dataclass
class LengthBoundReport:
    length: float
    quad_length: float
    halves: tuple
    split: AntipodalSplit | None
    shortcut_margins: tuple

    @property
    def margin(self):
        return self.length - 4.0


def verify_length_bound(K, points, config: ToleranceConfig = DEFAULT_TOL) -> LengthBoundReport:
    """Run the lower-bound pipeline for points outside ``int K`` with ``0`` in their hull.

    Steps: hull certificate for 0, antipodal split, shortcut on both arcs, and
    the quadrilateral ``(x_i0, p, x_j0, -p)`` whose two halves are each >= 2.
    The returned length is ``Length_K`` of the input polygon.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    PolygonalPath(pts)
    m = pts.shape[0]
    g = K.gauge(pts)
    if np.any(g < 1 - config.boundary_tol):
        raise PreconditionError("all points must lie outside int K")
    cert = numerics.conv_membership(pts, np.zeros(K.dim), config)
    if not cert.member:
        raise PreconditionError(f"0 not in conv of points (residual {cert.residual:.2e})")
    length = path_length(K, pts)
    if m == 2:
        # 0 on the segment: the quadrilateral degenerates to x1, 0, x2, 0
        h1 = float(2 * K.gauge(pts[0]))
        h2 = float(2 * K.gauge(pts[1]))
        return LengthBoundReport(length, h1 + h2, (h1, h2), None, ())
    split = antipodal_split(pts, cert.weights)
    xa, xb = pts[split.i0], pts[split.j0]
    p = split.p
    arc_a = pts[split.arc_a]
    arc_b = pts[np.concatenate([split.arc_b, [split.i0]])]
    sa = shortcut(K, arc_a, split.coeffs_a)
    sb = shortcut(K, arc_b, np.concatenate([split.coeffs_b, [0.0]]))
    quad = float(K.gauge(p - xa) + K.gauge(xb - p) + K.gauge(-p - xb) + K.gauge(xa + p))
    half_a = float(K.gauge(xa + p) + K.gauge(p - xa))
    half_b = float(K.gauge(xb - p) + K.gauge(-p - xb))
    return LengthBoundReport(length, quad, (half_a, half_b), split, (sa.margin, sb.margin))


@dataclass
class NormalBoundReport:
    length: float
    reduced_indices: tuple
    reduced_length: float
    cover: tuple | None
    shrink: float
    lifted_length: float
    inner: LengthBoundReport | None
    projected: bool


def verify_normal_length_bound(K, points, config: ToleranceConfig = DEFAULT_TOL,
                               pipeline=True) -> NormalBoundReport:
    """Length of ``q_1 ... q_m`` on ``bd K`` whose outer normals contain 0 in their hull.

    With ``pipeline=True`` the reduction behind the bound is executed: a
    minimal subset of normals still containing 0, the simplex cut out by the
    supporting half-spaces, a simplex cover, and the shrunk polygon
    ``q_i' = (1 - lam) q_i + lam x`` which has 0 in its own hull and lies
    outside ``int K``. When the normals span a proper subspace the construction
    runs in the quotient norm on that subspace.
    """
    if not K.smooth:
        raise NotSmoothError("normal-hull bound needs a smooth body")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    PolygonalPath(pts)
    g = K.gauge(pts)
    if np.any(np.abs(g - 1) > config.boundary_tol):
        raise PreconditionError("points must lie on the boundary of K")
    normals = K.gauge_gradient(pts)
    cert = numerics.conv_membership(normals, np.zeros(K.dim), config)
    if not cert.member:
        raise PreconditionError(f"0 not in conv of normals (residual {cert.residual:.2e})")
    length = path_length(K, pts)
    if not pipeline:
        return NormalBoundReport(length, tuple(range(len(pts))), length, None, 0.0, length,
                                 None, False)

    J = _minimal_support(normals, cert, config)
    sub = pts[list(J)]
    reduced_len = path_length(K, sub)
    N = normals[list(J)]
    k = len(J) - 1
    if k == 1:
        # opposite normals force antipodal points; lift directly
        inner = verify_length_bound(K, sub, config)
        return NormalBoundReport(length, J, reduced_len, None, 0.0, reduced_len, inner, False)

    # orthonormal basis of span(normals); work in those coordinates
    _, sv, vt = np.linalg.svd(N)
    W = vt[:k]
    projected = k < K.dim
    body = QuotientBody(K, W) if projected else _Coordinates(K, W)
    Nw = N @ W.T
    Qw = sub @ W.T
    # supporting half-spaces <n_i, y> <= <n_i, q_i> = 1 bound a simplex
    X = np.empty((k + 1, k))
    for i in range(k + 1):
        rows = np.delete(np.arange(k + 1), i)
        X[i] = np.linalg.solve(Nw[rows], np.ones(k))
    I, cover_cert = simplex_cover(X, Qw, config, validate=False)
    if len(I) == k + 1:
        inner = verify_length_bound(body, Qw[list(I)], config)
        return NormalBoundReport(length, J, reduced_len, I, 0.0, inner.length, inner, projected)
    w = cover_cert.weights
    notI = [j for j in range(k + 1) if j not in I]
    lam = float(w[notI].sum())
    xbar = (w[notI] @ X[notI]) / lam
    lifted = (1 - lam) * Qw[list(I)] + lam * xbar
    inner = verify_length_bound(body, lifted, config)
    return NormalBoundReport(length, J, reduced_len, I, lam, inner.length, inner, projected)


def _minimal_support(normals, cert, config):
    """Inclusion-minimal index set whose normals still contain 0 in their hull."""
    J = [int(i) for i in cert.support]
    origin = np.zeros(normals.shape[1])
    changed = True
    while changed and len(J) > 2:
        changed = False
        for i in list(J):
            trial = [j for j in J if j != i]
            if numerics.conv_membership(normals[trial], origin, config).member:
                J = trial
                changed = True
                break
    return tuple(J)


class _Coordinates(ConvexBody):
    """K expressed in orthonormal coordinates ``y = W x`` (W square)."""

    def __init__(self, K, W):
        self.K, self.W = K, W

    @property
    def dim(self):
        return self.W.shape[0]

    def gauge(self, y):
        return self.K.gauge(np.asarray(y) @ self.W)

    def support(self, u):
        return self.K.support(np.asarray(u) @ self.W)

    def support_point(self, u):
        return self.K.support_point(np.asarray(u) @ self.W) @ self.W.T

    def polar(self):
        raise NotImplementedError

    def scaled(self, t):
        raise NotImplementedError

    def linear_image(self, M):
        raise NotImplementedError


class QuotientBody(_Coordinates):
    """Orthogonal projection of K onto ``span(W rows)``; the quotient norm there.

    ``g(y) = min_{w ⊥ span} g_K(W^T y + w)``, computed by a smooth convex
    minimisation over the complement.
    """

    def __init__(self, K, W):
        super().__init__(K, W)
        _, _, vt = np.linalg.svd(W)
        self.C = vt[W.shape[0]:]

    def _one(self, y):
        base = y @ self.W
        if not np.any(base):
            return 0.0
        K, C = self.K, self.C

        def f(c):
            return float(K.gauge(base + c @ C))

        def df(c):
            return K.gauge_gradient(base + c @ C) @ C.T

        res = minimize(f, np.zeros(C.shape[0]), jac=df, method="BFGS", options=dict(gtol=1e-13))
        return float(res.fun)

    def gauge(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return self._one(y)
        return np.array([self._one(v) for v in y.reshape(-1, self.dim)]).reshape(y.shape[:-1])

    def support(self, u):
        # the projection's support function is K's support restricted to the subspace
        return self.K.support(np.asarray(u) @ self.W)
