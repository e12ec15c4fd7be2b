"""
Shared numerical kernels: hull membership, sphere-constrained local search,
bracketed root finding, finite-difference checks and seeded RNG streams.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize, nnls, root

from .config import DEFAULT_TOL, ToleranceConfig


class NoSignChangeError(ValueError):
    """Raised when a root bracket does not straddle a sign change."""


# ---------------------------------------------------------------------------
# RNG
# ---------------------------------------------------------------------------

def rng_stream(seed, *keys) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, *keys)``.

    The same key tuple gives the same stream on every platform, so property
    suites can shard instances freely.
    """
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))


def random_directions(rng, count, dim):
    """Uniform unit vectors, shape ``(count, dim)``."""
    g = rng.standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# convex-hull membership
# ---------------------------------------------------------------------------

@dataclass
class HullMembershipCertificate:
    """Convex-combination certificate for ``target`` in ``conv(points)``.

    ``weights`` has one entry per input point; after Caratheodory reduction at
    most ``dim + 1`` of them are nonzero. ``residual`` is recomputed by direct
    substitution, independent of the solver.
    """

    weights: np.ndarray
    residual: float
    member: bool
    support: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    raw_residual: float = np.nan

    def __bool__(self):
        return self.member


def _substitution_residual(points, weights, target):
    return float(np.linalg.norm(weights @ points - target))


def caratheodory_reduce(points, weights, tol=1e-14):
    """Shrink the support of a convex combination to an affinely independent set.

    Keeps ``weights @ points`` and ``sum(weights)`` unchanged (up to rounding)
    while zeroing weights until the supporting points are affinely independent.
    """
    points = np.asarray(points, dtype=float)
    w = np.array(weights, dtype=float)
    w[w < tol] = 0.0
    while True:
        S = np.flatnonzero(w > 0)
        if len(S) <= 1:
            return w
        M = np.vstack([points[S].T, np.ones(len(S))])
        _, sv, vt = np.linalg.svd(M)
        rank = int(np.sum(sv > sv[0] * 1e-12)) if sv.size else 0
        if rank == len(S):
            return w
        alpha = vt[-1]
        if alpha.max() <= 0:
            alpha = -alpha
        pos = alpha > 1e-15
        ratios = w[S][pos] / alpha[pos]
        k = int(np.argmin(ratios))
        theta = ratios[k]
        w[S] = w[S] - theta * alpha
        w[S[np.flatnonzero(pos)[k]]] = 0.0
        w[w < tol] = 0.0


def conv_membership(points, target, config: ToleranceConfig = DEFAULT_TOL) -> HullMembershipCertificate:
    """Decide whether ``target`` lies in the convex hull of ``points``.

    Solves the nonnegative least-squares problem
    ``min ||[P^T; 1] w - [t; 1]||``, ``w >= 0`` with the Lawson-Hanson
    active-set method, reduces the support to at most ``dim + 1`` points and
    re-solves the reduced equality system to full precision. NNLS answers are
    checked by substitution; a bad one is replaced by the LP solution.

    Parameters
    ----------
    points : array_like, shape (m, n)
    target : array_like, shape (n,)

    Returns
    -------
    HullMembershipCertificate
        ``member`` is False when the substituted residual exceeds ``hull_tol``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    t = np.asarray(target, dtype=float).ravel()
    if P.shape[0] < 1:
        raise ValueError("need at least one point")
    if P.shape[1] != t.size:
        raise ValueError(f"dimension mismatch: points are {P.shape[1]}-d, target is {t.size}-d")
    m = P.shape[0]
    rho = 1.0 + float(np.abs(P).max(initial=0.0))
    A = np.vstack([P.T, rho * np.ones(m)])
    b = np.concatenate([t, [rho]])
    w, rnorm = nnls(A, b, maxiter=50 * (m + t.size + 1))
    total = w.sum()
    if total > 0:
        w = w / total
    # scipy's nnls can report rnorm = 0 for a wrong solution; trust substitution only
    if total <= 0 or _substitution_residual(P, w, t) > config.hull_tol:
        w_lp, l1 = conv_membership_lp(P, t)
        if l1 <= config.hull_tol or total <= 0:
            w = np.clip(w_lp, 0.0, None)
            if w.sum() <= 0:
                return HullMembershipCertificate(np.zeros(m), np.inf, False, raw_residual=rnorm)
            w /= w.sum()
    w = caratheodory_reduce(P, w)
    S = np.flatnonzero(w > 0)
    # exact re-solve on the affinely independent support
    M = np.vstack([P[S].T, np.ones(len(S))])
    ws, *_ = np.linalg.lstsq(M, np.concatenate([t, [1.0]]), rcond=None)
    if ws.min() >= -1e-12:
        cand = np.zeros(m)
        cand[S] = np.clip(ws, 0.0, None)
        cand /= cand.sum()
        if _substitution_residual(P, cand, t) <= _substitution_residual(P, w, t):
            w = cand
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    res = _substitution_residual(P, w, t)
    return HullMembershipCertificate(
        weights=w,
        residual=res,
        member=res <= config.hull_tol,
        support=np.flatnonzero(w > 0),
        raw_residual=float(rnorm),
    )


def conv_membership_lp(points, target):
    """Independent LP route: minimise the L1 residual of ``sum w_i x_i = t``.

    Used as an oracle against :func:`conv_membership`; returns ``(weights, l1_residual)``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    t = np.asarray(target, dtype=float).ravel()
    m, n = P.shape
    # variables: w (m), s_plus (n), s_minus (n)
    c = np.concatenate([np.zeros(m), np.ones(2 * n)])
    A_eq = np.zeros((n + 1, m + 2 * n))
    A_eq[:n, :m] = P.T
    A_eq[:n, m:m + n] = np.eye(n)
    A_eq[:n, m + n:] = -np.eye(n)
    A_eq[n, :m] = 1.0
    b_eq = np.concatenate([t, [1.0]])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return res.x[:m], float(res.fun)


def lp_gauge(vertices, x):
    """Gauge of ``conv{+-v_j}`` at ``x`` as the LP ``min sum|c_j|, V^T c = x``."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    N = V.shape[0]
    c = np.ones(2 * N)
    A_eq = np.hstack([V.T, -V.T])
    res = linprog(c, A_eq=A_eq, b_eq=x, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"gauge LP failed: {res.message}")
    return float(res.fun)


def lp_support_point(functionals, u):
    """Vertex maximiser of ``<u, x>`` over ``{|<a_i, x>| <= 1}``."""
    A = np.atleast_2d(np.asarray(functionals, dtype=float))
    u = np.asarray(u, dtype=float).ravel()
    n = A.shape[1]
    res = linprog(-u, A_ub=np.vstack([A, -A]), b_ub=np.ones(2 * A.shape[0]),
                  bounds=[(None, None)] * n, method="highs")
    if res.status != 0:
        raise RuntimeError(f"support LP failed: {res.message}")
    return res.x


# ---------------------------------------------------------------------------
# local search on products of spheres
# ---------------------------------------------------------------------------

@dataclass
class LocalResult:
    point: np.ndarray
    value: float
    converged: bool
    evaluations: int
    charts: int = 1
    stopped: bool = False


def _tangent_basis(c):
    # Householder reflector mapping c to a multiple of e_0; its other columns span c-perp
    c = np.asarray(c, dtype=float)
    v = c / math.sqrt(c @ c)
    v[0] += 1.0 if v[0] >= 0 else -1.0
    H = np.eye(c.size) - np.outer(v, v) / abs(v[0])
    return H[:, 1:]


def normalize_blocks(x, blocks):
    x = np.array(x, dtype=float)
    for sl in blocks:
        nrm = np.linalg.norm(x[sl])
        if nrm == 0:
            raise ValueError("zero direction block")
        x[sl] /= nrm
    return x


def minimize_local(f, start, blocks=(), config: ToleranceConfig = DEFAULT_TOL, *,
                   step=0.2, max_evals=20000, xtol=None, max_charts=30, stop=None,
                   stop_every=5) -> LocalResult:
    """Nelder-Mead descent on a product of unit spheres times a Euclidean factor.

    Parameters
    ----------
    f : callable
        Objective taking the stacked vector (sphere blocks already unit norm).
    start : array_like
        Initial stacked vector; sphere blocks are renormalised.
    blocks : sequence of slice
        Coordinate blocks constrained to the unit sphere; all other
        coordinates are free.
    step : float
        Initial simplex edge in chart coordinates.
    xtol : float, optional
        Simplex-diameter stopping tolerance; defaults to ``config.search_tol``.
    stop : callable, optional
        Predicate on the current best point, checked every ``stop_every``
        simplex iterations; returning True ends the search early
        (``stopped=True`` in the result).

    Notes
    -----
    Each sphere block is handled in a tangent chart ``u = normalize(c + B theta)``
    centred at the current iterate; after every simplex run the chart is
    re-centred (the iterate is renormalised) and the search resumes with a
    smaller simplex. The procedure is deterministic given its inputs.
    """
    xtol = config.search_tol if xtol is None else xtol
    blocks = [sl if isinstance(sl, slice) else slice(*sl) for sl in blocks]
    x = normalize_blocks(np.asarray(start, dtype=float).ravel(), blocks)
    dim = x.size
    in_block = np.zeros(dim, dtype=bool)
    for sl in blocks:
        in_block[sl] = True
    free = np.flatnonzero(~in_block)
    nchart = sum(sl.stop - sl.start - 1 for sl in blocks) + free.size
    fx = float(f(x))
    evals = 1
    if nchart == 0:
        return LocalResult(x, fx, True, evals, 0)

    converged = False
    charts = 0
    while charts < max_charts and evals < max_evals:
        charts += 1
        bases = [_tangent_basis(x[sl]) for sl in blocks]
        centre = x.copy()

        def chart(theta, centre=centre, bases=bases):
            y = centre.copy()
            k = 0
            for sl, B in zip(blocks, bases):
                d = B.shape[1]
                v = centre[sl] + B @ theta[k:k + d]
                y[sl] = v / math.sqrt(v @ v)
                k += d
            if free.size:
                y[free] += theta[k:]
            return y

        def g(theta):
            return float(f(chart(theta)))

        simplex = np.vstack([np.zeros(nchart), step * np.eye(nchart)])
        callback = None
        if stop is not None:
            it = [0]

            def callback(xk, chart=chart):
                it[0] += 1
                if it[0] % stop_every == 0 and stop(chart(xk)):
                    raise StopIteration

        res = minimize(g, np.zeros(nchart), method="Nelder-Mead", callback=callback,
                       options=dict(initial_simplex=simplex, xatol=xtol, fatol=xtol * 1e-2,
                                    maxfev=max_evals - evals, adaptive=nchart > 4))
        evals += res.nfev
        moved = float(np.linalg.norm(res.x))
        if res.fun <= fx:
            x, fx = chart(res.x), float(res.fun)
        if stop is not None and stop(x):
            return LocalResult(x, fx, False, evals, charts, True)
        if res.status == 0 and moved <= 10 * xtol:
            converged = True
            break
        step = max(min(step, 4 * moved), 10 * xtol)
    return LocalResult(x, fx, converged, evals, charts)


def sphere_gradient_polish(f, grad, u0, gtol=1e-14, max_iter=200):
    """Refine a local minimiser of a scale-invariant ``f`` on the unit sphere.

    ``grad`` is the Euclidean gradient (tangent for 0-homogeneous ``f``). BFGS
    brings the iterate close; a Powell hybrid root solve on the tangent
    gradient in a chart then removes the last digits. The result never has a
    larger ``f`` (beyond rounding) or a larger tangent gradient than ``u0``.
    """
    u0 = np.asarray(u0, dtype=float)
    u0 = u0 / np.linalg.norm(u0)

    def tangent_norm(u):
        g = grad(u)
        return float(np.linalg.norm(g - (g @ u) * u))

    f0, t0 = float(f(u0)), tangent_norm(u0)
    res = minimize(f, u0, jac=grad, method="BFGS", options=dict(gtol=gtol, maxiter=max_iter))
    u1 = res.x / np.linalg.norm(res.x)
    if not float(f(u1)) <= f0 + 1e-15 * abs(f0):
        u1 = u0
    B = _tangent_basis(u1)

    def F(theta):
        v = u1 + B @ theta
        return B.T @ grad(v / math.sqrt(v @ v))

    try:
        sol = root(F, np.zeros(B.shape[1]), method="hybr", tol=1e-15)
        v = u1 + B @ sol.x
        u2 = v / np.linalg.norm(v)
    except (ValueError, np.linalg.LinAlgError):
        u2 = u1
    cands = [(tangent_norm(u), i, u) for i, u in enumerate((u0, u1, u2))
             if float(f(u)) <= f0 + 1e-14 * abs(f0)]
    return min(cands, key=lambda c: (c[0], c[1]))[2] if cands else u0


def multistart(f, starts, blocks=(), config: ToleranceConfig = DEFAULT_TOL, **kwargs):
    """Run :func:`minimize_local` from every start; return ``(best, results)``.

    Ties are broken by start order so the incumbent is order independent.
    """
    results = [minimize_local(f, s, blocks, config, **kwargs) for s in starts]
    best = min(range(len(results)), key=lambda i: (results[i].value, i))
    return results[best], results


# ---------------------------------------------------------------------------
# roots and derivative checks
# ---------------------------------------------------------------------------

def root_on_ray(g, bracket, dg=None, xtol=DEFAULT_TOL.root_xtol, max_iter=400):
    """Root of ``g`` inside ``bracket`` by bisection, then Newton polish.

    Raises
    ------
    NoSignChangeError
        If ``g`` has the same sign at both bracket ends.
    """
    a, b = map(float, bracket)
    ga, gb = g(a), g(b)
    if ga == 0:
        return a
    if gb == 0:
        return b
    if np.sign(ga) == np.sign(gb):
        raise NoSignChangeError(f"no sign change on [{a}, {b}]: g={ga:.3e}, {gb:.3e}")
    for _ in range(max_iter):
        if b - a <= xtol:
            break
        mid = 0.5 * (a + b)
        gm = g(mid)
        if gm == 0:
            return mid
        if np.sign(gm) == np.sign(ga):
            a, ga = mid, gm
        else:
            b, gb = mid, gm
    t = a if abs(ga) <= abs(gb) else b
    gt = g(t)
    if dg is not None:
        for _ in range(3):
            d = dg(t)
            if d == 0:
                break
            tn = t - gt / d
            if not (a - xtol <= tn <= b + xtol):
                break
            gn = g(tn)
            if abs(gn) >= abs(gt):
                break
            t, gt = tn, gn
    return t


def finite_diff_check(f, grad_f, samples, step=1e-6):
    """Max relative deviation between ``grad_f`` and central differences of ``f``."""
    worst = 0.0
    for x in np.atleast_2d(np.asarray(samples, dtype=float)):
        n = x.size
        fd = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            fd[i] = (f(x + e) - f(x - e)) / (2 * step)
        g = np.asarray(grad_f(x), dtype=float)
        scale = max(np.linalg.norm(g), 1e-300)
        worst = max(worst, float(np.linalg.norm(fd - g) / scale))
    return worst
