"""
Shortest closed T-billiard trajectories in K and the resulting capacity
estimates for Lagrangian products ``K x T``.

The search minimises the ``h_T``-length of closed polygons ``q_1 .. q_m`` on
bd K subject to ``0 in conv{n_K(q_i)}``, a property every closed billiard
trajectory has. Without that constraint the length functional collapses to a
single point. The constraint is built into the parametrisation: ``q_1 ..
q_{m-1}`` are radial images of free unit directions, and ``q_m`` is the
boundary point whose normal is ``-sum mu_i n_i`` for softmax weights ``mu``.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .billiards import BilliardTrajectory, criticality_residual, make_trajectory
from .bodies import NotSmoothError, PowerSum, find_inradius, smooth
from .config import DEFAULT_TOL, ToleranceConfig, worker_count

log = logging.getLogger(__name__)

TWO_BOUNCE = "two_bounce_closed_form"
SEARCH = "m_bounce_search"
FALSIFICATION = "FALSIFICATION-CANDIDATE"
TIE_RTOL = 1e-9


class FalsificationCandidate(RuntimeError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


@dataclass
class BranchResult:
    m: int
    best_length: float
    best_points: np.ndarray
    final_m: int
    starts: int
    converged_starts: int
    collapses: int
    lengths: np.ndarray = field(repr=False)
    final_ms: np.ndarray = field(repr=False)


@dataclass
class CapacityEstimate:
    value: float
    witness: BilliardTrajectory
    method: str
    diagnostics: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def falsification_candidate(self):
        return self.status == FALSIFICATION


# ---------------------------------------------------------------------------
# parametrisation
# ---------------------------------------------------------------------------

class _PolygonMap:
    """Maps the stacked search vector to a polygon on bd K with 0 in its normal hull."""

    def __init__(self, K, m):
        self.K, self.m, self.n = K, m, K.dim
        self.nblocks = m - 1
        self.nlogits = max(m - 2, 0)
        self.size = self.nblocks * self.n + self.nlogits
        self.blocks = [slice(i * self.n, (i + 1) * self.n) for i in range(self.nblocks)]
        self._hint = None

    def weights(self, v):
        z = np.concatenate([[0.0], v[self.nblocks * self.n:]])
        z = np.exp(z - z.max())
        return z / z.sum()

    def points(self, v):
        K = self.K
        U = v[:self.nblocks * self.n].reshape(self.nblocks, self.n)
        X = np.atleast_2d(K.boundary_point(U))
        N = np.atleast_2d(K.gauge_gradient(X))
        N = N / np.sqrt(np.einsum("ij,ij->i", N, N))[:, None]
        S = self.weights(v) @ N
        if self.m == 2:
            # bodies are centrally symmetric, so the normal -n_1 is attained at -q_1
            return np.vstack([X, -X[0]])
        if S @ S < 1e-28:
            S = N[0]
        if isinstance(K, PowerSum):
            last = K.support_point(-S, hint=self._hint)
            self._hint = last
        else:
            last = K.support_point(-S)
        return np.vstack([X, last])

    def random_start(self, rng):
        U = numerics.random_directions(rng, self.nblocks, self.n).ravel()
        return np.concatenate([U, rng.standard_normal(self.nlogits)])


def polygon_length(T, pts):
    edges = np.empty_like(pts)
    edges[:-1] = pts[1:] - pts[:-1]
    edges[-1] = pts[0] - pts[-1]
    return float(np.sum(T.support(edges)))


def merge_collapsed(pts, tol):
    """Drop cyclically consecutive points closer than ``tol``; returns the survivors."""
    pts = np.array(pts)
    changed = True
    while changed and len(pts) > 2:
        changed = False
        gaps = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        i = int(np.argmin(gaps))
        if gaps[i] < tol:
            pts = np.delete(pts, (i + 1) % len(pts), axis=0)
            changed = True
    return pts


def _branch_settings(m, dim, config):
    if m == 2:
        return dict(xtol=config.search_tol, max_evals=4000, step=0.3)
    # m >= 3 only has to certify "no shorter orbit"; budget grows with chart size
    nchart = (m - 1) * (dim - 1) + (m - 2)
    return dict(xtol=1e-7, max_evals=120 * nchart, step=0.3)


def _run_start(args):
    K, T, m, v0, config = args
    pmap = _PolygonMap(K, m)

    def F(v):
        return polygon_length(T, pmap.points(v))

    def collapsed(v):
        pts = pmap.points(v)
        gaps = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        return bool(gaps.min() < config.merge_tol)

    # once the incumbent merges two bounce points it belongs to a smaller branch
    stop = collapsed if m > 2 else None
    res = numerics.minimize_local(F, v0, pmap.blocks, config, stop=stop,
                                  **_branch_settings(m, K.dim, config))
    pts = pmap.points(res.point)
    merged = merge_collapsed(pts, config.merge_tol)
    return res.converged or res.stopped, polygon_length(T, merged), merged


def search_branch(K, T, m, starts=64, seed=0, config: ToleranceConfig = DEFAULT_TOL,
                  workers=None) -> BranchResult:
    """Multistart search over closed ``m``-gons on bd K with 0 in the normal hull."""
    pmap = _PolygonMap(K, m)
    jobs = [(K, T, m, pmap.random_start(numerics.rng_stream(seed, m, i)), config)
            for i in range(starts)]
    nw = worker_count(workers)
    if nw > 1 and starts > 1:
        with ProcessPoolExecutor(nw) as ex:
            out = list(ex.map(_run_start, jobs, chunksize=max(1, starts // (4 * nw))))
    else:
        out = [_run_start(j) for j in jobs]
    lengths = np.array([o[1] for o in out])
    final_ms = np.array([len(o[2]) for o in out])
    # min is order independent; ties go to fewer bounces, then start index
    best = min(range(starts), key=lambda i: (lengths[i], final_ms[i], i))
    return BranchResult(
        m=m, best_length=float(lengths[best]), best_points=out[best][2],
        final_m=int(final_ms[best]), starts=starts,
        converged_starts=int(sum(o[0] for o in out)),
        collapses=int(np.sum(final_ms < m)), lengths=lengths, final_ms=final_ms)


# ---------------------------------------------------------------------------
# two-bounce orbits
# ---------------------------------------------------------------------------

def two_bounce_length(K, T, u):
    """``h_T``-length of the bouncing orbit through ``+-boundary_point(K, u)``."""
    x = K.boundary_point(u)
    return 4.0 * float(T.support(x))


def two_bounce_gradient(K, T, u):
    """Gradient in ``u`` of :func:`two_bounce_length` (chain rule through the radial map)."""
    u = np.asarray(u, dtype=float)
    g = float(K.gauge(u))
    x = u / g
    s = T.support_point(x)
    return 4.0 * (s / g - K.gauge_gradient(u) * float(u @ s) / g ** 2)


def polish_two_bounce(K, T, u0):
    """Gradient refinement of a two-bounce orbit; returns the unit direction."""
    return numerics.sphere_gradient_polish(lambda u: two_bounce_length(K, T, u),
                                           lambda u: two_bounce_gradient(K, T, u), u0)


def _two_bounce_witness(K, T, q, polish=True):
    strict = T.strictly_convex and K.smooth
    if polish and strict:
        q = K.boundary_point(polish_two_bounce(K, T, q))
    pts = np.vstack([q, -q])
    if strict:
        return make_trajectory(K, T, pts)
    p = np.atleast_2d(T.support_point(np.vstack([-2 * q, 2 * q])))
    length = float(np.sum(T.support(np.vstack([-2 * q, 2 * q]))))
    return BilliardTrajectory(pts, p, np.full(2, np.nan), length)


def two_bounce_capacity(K, T, starts=16, seed=0, config: ToleranceConfig = DEFAULT_TOL,
                        polish=True) -> CapacityEstimate:
    """``4 * inrad_{T°}(K)``, the length of the shortest bouncing orbit ``[-q, q]``."""
    if K.dim != T.dim:
        raise ValueError("K and T must have the same dimension")
    inr = find_inradius(K, T.polar(), starts=starts, seed=seed, config=config)
    witness = _two_bounce_witness(K, T, inr.point, polish)
    return CapacityEstimate(
        value=4.0 * inr.value, witness=witness, method=TWO_BOUNCE,
        diagnostics=dict(inradius=inr.value, converged=inr.converged, starts=inr.starts,
                         witness_length=witness.length))


# ---------------------------------------------------------------------------
# search driver
# ---------------------------------------------------------------------------

def shortest_trajectory(K, T, m_max=5, starts=64, seed=0, config: ToleranceConfig = DEFAULT_TOL,
                        workers=None) -> CapacityEstimate:
    """Shortest closed T-billiard trajectory in K over ``m = 2 .. m_max`` bounces.

    Each branch ``m`` runs ``starts`` seeded local searches; branches whose
    best polygon merges bounce points are re-scored at the smaller count. A
    two-bounce winner is refined with the gradient variant before the
    witness is built.
    """
    for body, name in ((K, "K"), (T, "T")):
        if not (body.smooth and body.strictly_convex):
            raise NotSmoothError(f"{name} must be smooth and strictly convex; smooth polytopes first")
    if K.dim != T.dim:
        raise ValueError("K and T must have the same dimension")
    if not 2 <= m_max <= 8:
        raise ValueError("m_max must lie in [2, 8]")
    branches = {m: search_branch(K, T, m, starts, seed, config, workers)
                for m in range(2, m_max + 1)}
    converged = sum(b.converged_starts for b in branches.values())
    if converged == 0:
        raise RuntimeError(f"no local search converged: {branches}")
    lowest = min(b.best_length for b in branches.values())
    # lengths within TIE_RTOL are rounding-level ties (merging can shave ~1e-13);
    # prefer the fewest surviving bounces among them
    tied = [m for m, b in branches.items() if b.best_length <= lowest * (1 + TIE_RTOL)]
    best_m = min(tied, key=lambda m: (branches[m].final_m, m))
    best = branches[best_m]
    if best.final_m == 2:
        witness = _two_bounce_witness(K, T, best.best_points[0])
    else:
        witness = make_trajectory(K, T, best.best_points)
    crit = criticality_residual(K, T, witness)
    value = min(best.best_length, witness.length) if witness.m == best.final_m else best.best_length
    diagnostics = dict(
        starts=starts * len(branches),
        converged_starts=converged,
        best_per_m={m: b.best_length for m, b in branches.items()},
        final_m_per_branch={m: b.final_m for m, b in branches.items()},
        collapses={m: b.collapses for m, b in branches.items()},
        branches=branches,
        best_m=best_m,
        witness_m=witness.m,
        residual_max=crit.max_residual,
        multiplier_min=float(crit.multipliers.min()),
        normal_sum=float(np.linalg.norm(crit.normal_sum)),
    )
    return CapacityEstimate(value, witness, SEARCH, diagnostics)


def hz_capacity(K, T, m_max=5, starts=64, seed=0, config: ToleranceConfig = DEFAULT_TOL,
                workers=None, strict=False) -> CapacityEstimate:
    """Capacity of ``K x T`` by search, cross-checked against ``4 inrad_{T°}(K)``.

    A relative disagreement above ``config.agreement_rtol`` marks the estimate
    as a falsification candidate (or raises with ``strict=True``); the two
    numbers are never reconciled.
    """
    closed = two_bounce_capacity(K, T, seed=seed, config=config)
    est = shortest_trajectory(K, T, m_max, starts, seed, config, workers)
    rel = abs(est.value - closed.value) / max(abs(closed.value), 1e-300)
    est.diagnostics.update(two_bounce_value=closed.value, relative_gap=rel,
                           cylindrical_equals_hz="assumed")
    if rel > config.agreement_rtol:
        est.status = FALSIFICATION
        msg = (f"search value {est.value:.10g} disagrees with 4*inradius {closed.value:.10g} "
               f"(relative gap {rel:.2e})")
        log.warning(msg)
        if strict:
            raise FalsificationCandidate(msg, est)
    return est


def smoothed_capacity(K, T=None, s_values=(8, 16), **kwargs):
    """Capacity of polytope products through power-sum smoothing.

    ``T=None`` means ``T = K°`` (taken as the exact polar of each smoothed K).
    Returns per-``s`` values and a linear extrapolation in ``1/s`` from the
    last two; the extrapolation is a heuristic and is only reported.
    """
    values = {}
    for s in s_values:
        Ks = smooth(K, s)
        Ts = Ks.polar() if T is None else smooth(T, s)
        values[s] = hz_capacity(Ks, Ts, **kwargs)
    out = dict(per_s={s: e.value for s, e in values.items()}, estimates=values)
    if len(s_values) >= 2:
        s1, s2 = s_values[-2], s_values[-1]
        c1, c2 = values[s1].value, values[s2].value
        out["extrapolated"] = (s2 * c2 - s1 * c1) / (s2 - s1)
    return out
