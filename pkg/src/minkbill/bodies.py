"""
Centrally symmetric convex bodies with gauge, support, boundary and polar maps.

Every body is immutable. Gauge and support evaluators accept either one
vector of shape ``(n,)`` or a batch of shape ``(..., n)``.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull

from . import numerics
from .config import DEFAULT_TOL, ToleranceConfig

log = logging.getLogger(__name__)

MAX_DIM = 8


class DimensionError(ValueError):
    pass


class NotSmoothError(ValueError):
    """Operation needs a smooth (or strictly convex) body."""


class InvalidBodyError(ValueError):
    pass


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _full_rank(M, what):
    if np.linalg.matrix_rank(M) < M.shape[1]:
        raise InvalidBodyError(f"{what} do not span R^{M.shape[1]}; body is unbounded or flat")


def _square_invertible(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidBodyError(f"matrix must be square, got shape {A.shape}")
    if A.shape[0] > MAX_DIM:
        raise InvalidBodyError(f"dimension {A.shape[0]} exceeds {MAX_DIM}")
    if not np.all(np.isfinite(A)) or abs(np.linalg.det(A)) < 1e-300 or np.linalg.cond(A) > 1e12:
        raise InvalidBodyError("matrix is singular or ill-conditioned")
    return A


def _rows(a, what):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] == 0:
        raise InvalidBodyError(f"{what} must be a non-empty list of vectors")
    if a.shape[1] > MAX_DIM:
        raise InvalidBodyError(f"dimension {a.shape[1]} exceeds {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise InvalidBodyError(f"{what} contain non-finite entries")
    _full_rank(a, what)
    return a


def _pnorm(y, p):
    # overflow-safe p-norm along the last axis
    ay = np.abs(y)
    m = ay.max(axis=-1)
    safe = np.where(m > 0, m, 1.0)
    r = ay / safe[..., None]
    return np.where(m > 0, m * np.sum(r ** p, axis=-1) ** (1.0 / p), 0.0)


def _dual_gradient(y, p):
    """Gradient of the p-norm at y (rows), normalised so the result has unit q-norm."""
    nrm = _pnorm(y, p)
    r = y / nrm[..., None]
    return np.sign(r) * np.abs(r) ** (p - 1)


class ConvexBody(ABC):
    """Centrally symmetric convex body with nonempty interior in R^n."""

    smooth = False

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    def strictly_convex(self) -> bool:
        return self.smooth

    def _vec(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise DimensionError(f"expected vectors of length {self.dim}, got shape {x.shape}")
        return x

    @abstractmethod
    def gauge(self, x):
        """Minkowski functional ``inf{r >= 0 : x in rK}``."""

    @abstractmethod
    def support(self, u):
        """Support function ``sup{<x, u> : x in K}``."""

    @abstractmethod
    def support_point(self, u):
        """A maximiser of ``<x, u>`` over K."""

    def gauge_gradient(self, x):
        raise NotSmoothError(
            f"{type(self).__name__} is not smooth; use facet_normal() for a tie-broken normal")

    def normal(self, x):
        """Outer normal ``grad g_K(x)``; facet functional for polytopes."""
        if self.smooth:
            return self.gauge_gradient(x)
        return self.facet_normal(x)

    def facet_normal(self, x):
        raise NotSmoothError(f"{type(self).__name__} has no facet structure")

    def boundary_point(self, u):
        """Radial projection ``u / g_K(u)`` onto the boundary."""
        u = self._vec(u)
        g = np.asarray(self.gauge(u))
        if np.any(g <= 0):
            raise ValueError("boundary_point of the zero vector")
        return u / g[..., None] if u.ndim > 1 else u / float(g)

    @abstractmethod
    def polar(self) -> "ConvexBody": ...

    @abstractmethod
    def scaled(self, t) -> "ConvexBody":
        """The body ``t * K`` for ``t > 0``."""

    @abstractmethod
    def linear_image(self, M) -> "ConvexBody":
        """The body ``M K`` for invertible ``M``."""

    def _each(self, fn, u):
        u = self._vec(u)
        if u.ndim == 1:
            return fn(u)
        flat = u.reshape(-1, self.dim)
        out = np.array([fn(v) for v in flat])
        return out.reshape(u.shape[:-1] + out.shape[1:])


# ---------------------------------------------------------------------------
# polytopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HPolytope(ConvexBody):
    """``{x : |<a_i, x>| <= 1 for all i}``."""

    functionals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "functionals", _frozen(_rows(self.functionals, "functionals")))

    @property
    def dim(self):
        return self.functionals.shape[1]

    @cached_property
    def _dual(self):
        return VPolytope(self.functionals)

    def gauge(self, x):
        x = self._vec(x)
        return np.abs(x @ self.functionals.T).max(axis=-1)

    def support(self, u):
        # h_K = g_{K°}, and K° = conv{+-a_i}
        return self._dual.gauge(self._vec(u))

    def support_point(self, u):
        return self._each(lambda v: numerics.lp_support_point(self.functionals, v), u)

    def facet_normal(self, x):
        def one(v):
            vals = self.functionals @ v
            top = np.abs(vals).max()
            i = int(np.flatnonzero(np.abs(vals) >= top - 1e-12 * max(1.0, top))[0])
            return np.sign(vals[i] or 1.0) * self.functionals[i]
        return self._each(one, x)

    def polar(self):
        return self._dual

    def scaled(self, t):
        return HPolytope(self.functionals / float(t))

    def linear_image(self, M):
        return HPolytope(self.functionals @ np.linalg.inv(_square_invertible(M)))


@dataclass(frozen=True, eq=False)
class VPolytope(ConvexBody):
    """``conv{+-v_j}``."""

    vertices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(_rows(self.vertices, "vertices")))

    @property
    def dim(self):
        return self.vertices.shape[1]

    @cached_property
    def facets(self):
        """Functionals ``f_k`` with ``K = {x : <f_k, x> <= 1}`` (from qhull)."""
        V = self.vertices
        if self.dim == 1:
            r = np.abs(V).max()
            return _frozen([[1.0 / r], [-1.0 / r]])
        hull = ConvexHull(np.vstack([V, -V]))
        eq = hull.equations
        return _frozen(eq[:, :-1] / (-eq[:, -1:]))

    def gauge(self, x):
        x = self._vec(x)
        return (x @ self.facets.T).max(axis=-1)

    def gauge_lp(self, x):
        """Gauge through the LP ``min sum t_j`` over signed vertex combinations."""
        return self._each(lambda v: numerics.lp_gauge(self.vertices, v), x)

    def support(self, u):
        u = self._vec(u)
        return np.abs(u @ self.vertices.T).max(axis=-1)

    def support_point(self, u):
        def one(v):
            vals = self.vertices @ v
            top = np.abs(vals).max()
            ties = np.flatnonzero(np.abs(vals) >= top - 1e-12 * max(1.0, top))
            if len(ties) > 1:
                log.debug("support_point: %d tied vertices, taking index %d", len(ties), ties[0])
            j = int(ties[0])
            return np.sign(vals[j] or 1.0) * self.vertices[j]
        return self._each(one, u)

    def facet_normal(self, x):
        def one(v):
            vals = self.facets @ v
            k = int(np.flatnonzero(vals >= vals.max() - 1e-12 * max(1.0, vals.max()))[0])
            return self.facets[k].copy()
        return self._each(one, x)

    def polar(self):
        return HPolytope(self.vertices)

    def scaled(self, t):
        return VPolytope(self.vertices * float(t))

    def linear_image(self, M):
        return VPolytope(self.vertices @ _square_invertible(M).T)


# ---------------------------------------------------------------------------
# smooth bodies
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ellipsoid(ConvexBody):
    """``A B_2^n``."""

    matrix: np.ndarray
    smooth = True

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(_square_invertible(self.matrix)))

    @property
    def dim(self):
        return self.matrix.shape[0]

    @cached_property
    def _inv(self):
        return _frozen(np.linalg.inv(self.matrix))

    def gauge(self, x):
        return np.linalg.norm(self._vec(x) @ self._inv.T, axis=-1)

    def support(self, u):
        return np.linalg.norm(self._vec(u) @ self.matrix, axis=-1)

    def support_point(self, u):
        w = self._vec(u) @ self.matrix
        return (w / np.linalg.norm(w, axis=-1, keepdims=True)) @ self.matrix.T

    def gauge_gradient(self, x):
        y = self._vec(x) @ self._inv.T
        return (y / np.linalg.norm(y, axis=-1, keepdims=True)) @ self._inv

    def polar(self):
        return Ellipsoid(self._inv.T)

    def scaled(self, t):
        return Ellipsoid(self.matrix * float(t))

    def linear_image(self, M):
        return Ellipsoid(_square_invertible(M) @ self.matrix)


@dataclass(frozen=True, eq=False)
class LpBall(ConvexBody):
    """``A B_p^n`` for ``1 < p < inf``."""

    matrix: np.ndarray
    p: float
    smooth = True

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(_square_invertible(self.matrix)))
        p = float(self.p)
        if not 1 < p < np.inf:
            raise InvalidBodyError(f"p must lie in (1, inf), got {p}")
        object.__setattr__(self, "p", p)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def q(self):
        return self.p / (self.p - 1.0)

    @cached_property
    def _inv(self):
        return _frozen(np.linalg.inv(self.matrix))

    def gauge(self, x):
        return _pnorm(self._vec(x) @ self._inv.T, self.p)

    def support(self, u):
        return _pnorm(self._vec(u) @ self.matrix, self.q)

    def support_point(self, u):
        w = self._vec(u) @ self.matrix
        return _dual_gradient(w, self.q) @ self.matrix.T

    def gauge_gradient(self, x):
        y = self._vec(x) @ self._inv.T
        return _dual_gradient(y, self.p) @ self._inv

    def polar(self):
        return LpBall(self._inv.T, self.q)

    def scaled(self, t):
        return LpBall(self.matrix * float(t), self.p)

    def linear_image(self, M):
        return LpBall(_square_invertible(M) @ self.matrix, self.p)


@dataclass(frozen=True, eq=False)
class PowerSum(ConvexBody):
    """Unit ball of ``g(x) = (sum_i |<a_i, x>|^s)^(1/s)``.

    A smooth, strictly convex inner approximation of the H-polytope with the
    same functionals; it converges to that polytope as ``s -> inf``.
    """

    functionals: np.ndarray
    s: float
    support_starts: int = 16
    smooth = True

    def __post_init__(self):
        object.__setattr__(self, "functionals", _frozen(_rows(self.functionals, "functionals")))
        s = float(self.s)
        if not 1 < s < np.inf:
            raise InvalidBodyError(f"s must lie in (1, inf), got {s}")
        object.__setattr__(self, "s", s)

    @property
    def dim(self):
        return self.functionals.shape[1]

    def gauge(self, x):
        return _pnorm(self._vec(x) @ self.functionals.T, self.s)

    def gauge_gradient(self, x):
        y = self._vec(x) @ self.functionals.T
        return _dual_gradient(y, self.s) @ self.functionals

    def support(self, u):
        u = self._vec(u)
        x = self.support_point(u)
        return np.sum(x * u, axis=-1)

    def support_point(self, u, hint=None):
        u = self._vec(u)
        if self.s < 2:
            return self._each(self.support_point_search, u)
        if u.ndim == 2 and len(u) > 1 and hint is None:
            return self._newton_support_batch(u)
        return self._each(lambda v: self._newton_support_point(v, hint), u)

    def _newton_support_batch(self, U, max_iter=100):
        # row-wise damped Newton, same iteration as _newton_support_point
        A, s = self.functionals, self.s
        nrm = np.linalg.norm(U, axis=1)
        if np.any(nrm == 0):
            raise ValueError("support_point of the zero direction")
        X = U / nrm[:, None]
        V = X.copy()
        V[:, 0] += np.where(V[:, 0] >= 0, 1.0, -1.0)
        Bs = (np.eye(self.dim) - V[:, :, None] * V[:, None, :] / np.abs(V[:, :1, None]))[:, :, 1:]

        def G(Z):
            return np.sum(np.abs(Z @ A.T) ** s, axis=1)

        Gx = G(X)
        active = np.arange(len(X))
        for _ in range(max_iter):
            if active.size == 0:
                break
            x, B, gx = X[active], Bs[active], Gx[active]
            Y = x @ A.T
            aY = np.abs(Y)
            grad = s * (np.sign(Y) * aY ** (s - 1)) @ A
            H = s * (s - 1) * np.einsum("ki,ij,il->kjl", aY ** (s - 2), A, A)
            gt = np.einsum("knj,kn->kj", B, grad)
            Ht = np.einsum("kna,knm,kmb->kab", B, H, B)
            try:
                dt = -np.linalg.solve(Ht, gt[..., None])[..., 0]
            except np.linalg.LinAlgError:
                dt = -np.einsum("kab,kb->ka", np.linalg.pinv(Ht), gt)
            slope = np.sum(gt * dt, axis=1)
            bad = ~(slope < 0)
            dt[bad] = -gt[bad]
            slope[bad] = -np.sum(gt[bad] ** 2, axis=1)
            d = np.einsum("knj,kj->kn", B, dt)
            finished = ~bad & (-slope <= 1e-20 * gx)
            t = np.ones(len(x))
            Gn = G(x + d)
            for _ in range(60):
                fail = ~finished & (Gn > gx + 1e-4 * t * slope) & (t >= 1e-12)
                if not fail.any():
                    break
                t[fail] *= 0.5
                Gn[fail] = G(x[fail] + t[fail, None] * d[fail])
            xn = x + t[:, None] * d
            accept = finished | (Gn <= gx)
            stalled = np.linalg.norm(t[:, None] * d, axis=1) <= 1e-15 * np.linalg.norm(x, axis=1)
            X[active[accept]] = xn[accept]
            Gx[active[accept]] = Gn[accept]
            active = active[accept & ~finished & ~stalled]
        return X / self.gauge(X)[:, None]

    def _newton_support_point(self, u, hint=None, max_iter=200):
        # minimise G(x) = sum |<a_i,x>|^s on the hyperplane <u_hat, x> = 1;
        # the minimiser rescaled to the boundary maximises <u, x> over K
        A, s = self.functionals, self.s
        nu = np.linalg.norm(u)
        if nu == 0:
            raise ValueError("support_point of the zero direction")
        uh = u / nu
        B = numerics._tangent_basis(uh)
        x = uh.copy()
        if hint is not None:
            c = float(np.dot(hint, uh))
            if c > 0:
                x = np.asarray(hint, dtype=float) / c

        def G(z):
            return float(np.sum(np.abs(A @ z) ** s))

        flat = B.shape[1] == 1
        Gx = G(x)
        for _ in range(max_iter):
            y = A @ x
            w = np.abs(y) ** (s - 2)
            grad = s * (y * w) @ A
            AB = A @ B
            gt = grad @ B
            Ht = s * (s - 1) * (AB.T * w) @ AB
            if flat:
                h = Ht[0, 0]
                dt = -gt / h if h > 0 else -gt
            else:
                try:
                    dt = -np.linalg.solve(Ht, gt)
                except np.linalg.LinAlgError:
                    dt = -gt
            slope = float(gt @ dt)
            if slope >= 0:
                dt, slope = -gt, -float(gt @ gt)
            elif -slope <= 1e-20 * Gx:
                # Newton decrement ~ squared relative point error; the last full step is exact enough
                x = x + B @ dt
                break
            d = B @ dt
            t = 1.0
            while True:
                xn = x + t * d
                Gn = G(xn)
                if Gn <= Gx + 1e-4 * t * slope or t < 1e-12:
                    break
                t *= 0.5
            if Gn > Gx:
                break
            stalled = t * np.linalg.norm(d) <= 1e-15 * np.linalg.norm(x)
            x, Gx = xn, Gn
            if stalled:
                break
        return x / float(self.gauge(x))

    def support_point_search(self, u):
        """Maximise ``<u, boundary_point(d)>`` over directions ``d`` by multistart simplex search."""
        u = np.asarray(u, dtype=float)
        rng = numerics.rng_stream(0, 7919)
        starts = [u / np.linalg.norm(u)]
        starts += list(numerics.random_directions(rng, self.support_starts - 1, self.dim))
        best, _ = numerics.multistart(lambda d: -float(u @ (d / self.gauge(d))), starts,
                                      [slice(0, self.dim)], xtol=1e-10)
        return self.boundary_point(best.point)

    def polar(self):
        return PolarBody(self)

    def scaled(self, t):
        return PowerSum(self.functionals / float(t), self.s, self.support_starts)

    def linear_image(self, M):
        return PowerSum(self.functionals @ np.linalg.inv(_square_invertible(M)), self.s,
                        self.support_starts)


@dataclass(frozen=True, eq=False)
class PolarBody(ConvexBody):
    """Polar of a body that has no closed-form dual; ``g_{K°} = h_K``."""

    primal: ConvexBody

    @property
    def dim(self):
        return self.primal.dim

    @property
    def smooth(self):
        return self.primal.smooth

    def gauge(self, x):
        return self.primal.support(self._vec(x))

    def support(self, u):
        return self.primal.gauge(self._vec(u))

    def support_point(self, u):
        # argmax_{p in K°} <p, u> = grad g_K(u) for smooth K
        return self.primal.gauge_gradient(self._vec(u))

    def gauge_gradient(self, x):
        return self.primal.support_point(self._vec(x))

    def polar(self):
        return self.primal

    def scaled(self, t):
        return PolarBody(self.primal.scaled(1.0 / float(t)))

    def linear_image(self, M):
        return PolarBody(self.primal.linear_image(np.linalg.inv(_square_invertible(M)).T))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def unit_ball(n, radius=1.0):
    return Ellipsoid(radius * np.eye(n))


def ellipsoid(axes):
    return Ellipsoid(np.diag(np.asarray(axes, dtype=float)))


def cube(n, half_width=1.0):
    return HPolytope(np.eye(n) / half_width)


def cross_polytope(n, radius=1.0):
    return VPolytope(radius * np.eye(n))


def lp_ball(n, p, radius=1.0):
    return LpBall(radius * np.eye(n), p)


def regular_polygon_functionals(sides):
    """Functionals of the regular ``sides``-gon (``sides`` even) with inradius 1."""
    if sides % 2 or sides < 4:
        raise ValueError("a symmetric polygon needs an even number >= 4 of sides")
    k = sides // 2
    ang = np.pi * np.arange(k) / k
    return np.column_stack([np.cos(ang), np.sin(ang)])


def regular_polygon(sides):
    return HPolytope(regular_polygon_functionals(sides))


def smooth(body, s):
    """Power-sum smoothing of a polytope; smooth bodies are returned unchanged."""
    if body.smooth:
        return body
    if isinstance(body, HPolytope):
        return PowerSum(body.functionals, s)
    if isinstance(body, VPolytope):
        return PowerSum(_dedupe_rows(body.facets), s)
    raise TypeError(f"cannot smooth {type(body).__name__}")


def _dedupe_rows(F, tol=1e-9):
    # keep one functional per antipodal facet pair
    kept = []
    for f in F:
        if not any(np.allclose(f, k, atol=tol) or np.allclose(f, -k, atol=tol) for k in kept):
            kept.append(f)
    return np.array(kept)


# ---------------------------------------------------------------------------
# functional API and inradius
# ---------------------------------------------------------------------------

def gauge(body, x):
    return body.gauge(x)


def support(body, u):
    return body.support(u)


def support_point(body, u):
    return body.support_point(u)


def gauge_gradient(body, x):
    return body.gauge_gradient(x)


def boundary_point(body, u):
    return body.boundary_point(u)


def polar(body):
    return body.polar()


@dataclass
class InradiusResult:
    value: float
    point: np.ndarray
    converged: bool
    starts: int


def find_inradius(K, S, starts=16, seed=0, config: ToleranceConfig = DEFAULT_TOL) -> InradiusResult:
    """Largest ``r`` with ``r S ⊆ K``, as ``min_{x in bd K} g_S(x)``.

    The ratio ``g_S(u) / g_K(u)`` is minimised over unit directions ``u`` from
    ``starts`` seeded random starts (plus the coordinate axes); ``point`` is
    the minimiser on the boundary of K.
    """
    if K.dim != S.dim:
        raise DimensionError(f"bodies live in R^{K.dim} and R^{S.dim}")
    n = K.dim

    def ratio(u):
        return float(S.gauge(u) / K.gauge(u))

    if n == 1:
        u = np.ones(1)
        return InradiusResult(ratio(u), K.boundary_point(u), True, 1)
    rng = numerics.rng_stream(seed, 101)
    cand = list(np.eye(n)) + list(numerics.random_directions(rng, starts, n))
    block = [slice(0, n)]
    # coarse multistart locates the basin; only the winner is refined to search_tol
    best, _ = numerics.multistart(ratio, cand, block, config, step=0.3, xtol=1e-6,
                                  max_evals=400 * n)
    fine = numerics.minimize_local(ratio, best.point, block, config, step=1e-3)
    u, converged = fine.point, fine.converged
    if K.smooth and S.smooth:
        def grad(v):
            gk, gs = float(K.gauge(v)), float(S.gauge(v))
            return S.gauge_gradient(v) / gk - gs * K.gauge_gradient(v) / gk ** 2

        u = numerics.sphere_gradient_polish(ratio, grad, u)
        converged = converged or _tangent_small(grad, u)
    if not converged:
        log.warning("inradius search did not converge; best bound %.12g", ratio(u))
    return InradiusResult(ratio(u), K.boundary_point(u), converged, len(cand))


def _tangent_small(grad, u, tol=1e-9):
    g = grad(u)
    return float(np.linalg.norm(g - (g @ u) * u)) <= tol * max(1.0, float(np.linalg.norm(g)))


def inradius_wrt(K, S, starts=16, seed=0, config: ToleranceConfig = DEFAULT_TOL) -> float:
    """``max{r > 0 : r S ⊆ K}``."""
    return find_inradius(K, S, starts, seed, config).value
