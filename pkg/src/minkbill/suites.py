"""
Random instance generators and property suites for the path-length bounds,
the constructive steps behind them and witness criticality.

Every instance draws from its own stream ``rng_stream(seed, suite_id, i)``,
so results do not depend on sharding or worker count. A suite yields one
CSV-ready row per instance; ``ok`` is False exactly when the property fails.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bodies as B
from . import numerics
from .billiards import criticality_residual
from .capacity import two_bounce_capacity
from .config import DEFAULT_TOL, worker_count
from .paths import (antipodal_split, path_length, shortcut, simplex_cover, verify_length_bound,
                    verify_normal_length_bound)

LENGTH_TOL = 1e-9
EQUALITY_TOL = 1e-12
NORMAL_TOL = 1e-6
CERT_TOL = 1e-9
COLLINEAR_TOL = 1e-9

ROW_FIELDS = ("suite", "seed", "instance", "family", "n", "m", "length", "margin", "ok")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def length_family(name, n):
    if name == "disk":
        return B.unit_ball(n)
    if name == "cube":
        return B.cube(n)
    if name == "l1.5":
        return B.lp_ball(n, 1.5)
    raise ValueError(f"unknown family {name!r}")


LENGTH_FAMILIES = ("disk", "cube", "l1.5")


def convex_weights(rng, m):
    w = rng.exponential(size=m)
    return w / w.sum()


def outside_points_with_origin(K, m, rng):
    """``m`` points with ``g_K >= 1`` whose hull contains 0, in random cyclic order.

    The first ``m - 1`` points are radial boundary points scaled by U[1, 2];
    the last is placed on the ray opposite their weighted mean, which puts 0
    in the hull by construction. Returns ``(points, weights)``.
    """
    n = K.dim
    X = np.atleast_2d(K.boundary_point(numerics.random_directions(rng, m - 1, n)))
    X = X * rng.uniform(1.0, 2.0, size=(m - 1, 1))
    eta = convex_weights(rng, m - 1)
    mean = eta @ X
    if np.linalg.norm(mean) < 1e-12:
        last = K.boundary_point(numerics.random_directions(rng, 1, n)[0])
        w_last = 0.0
    else:
        last = K.boundary_point(-mean) * rng.uniform(1.0, 2.0)
        w_last = np.linalg.norm(mean) / np.linalg.norm(last)
    pts = np.vstack([X, last])
    w = np.append(eta, w_last)
    w = w / w.sum()
    perm = rng.permutation(m)
    return pts[perm], w[perm]


def boundary_points_with_normal_origin(K, m, rng):
    """``m`` points on bd K whose outer normals contain 0 in their hull.

    Normals are chosen first (the last opposes the weighted mean of the
    others) and mapped to bd K by the support point.
    """
    n = K.dim
    N = numerics.random_directions(rng, m - 1, n)
    eta = convex_weights(rng, m - 1)
    mean = eta @ N
    last = -mean if np.linalg.norm(mean) > 1e-12 else -N[0]
    U = np.vstack([N, last])[rng.permutation(m)]
    return np.atleast_2d(K.support_point(U))


def normal_family(rng, n):
    kind = rng.integers(3)
    M = rng.standard_normal((n, n)) + 2.0 * np.eye(n)
    if kind == 0:
        return "ellipsoid", B.Ellipsoid(M)
    if kind == 1:
        return "lpball", B.LpBall(M, float(rng.uniform(1.2, 4.0)))
    s = float(rng.choice([2.0, 4.0, 8.0]))
    return "powersum", B.PowerSum(rng.standard_normal((n + 2, n)), s)


def random_smooth_pair(rng, n):
    def one():
        M = rng.standard_normal((n, n)) + 2.0 * np.eye(n)
        if rng.random() < 0.5:
            return B.Ellipsoid(M)
        return B.LpBall(M, float(rng.uniform(1.3, 4.0)))
    return one(), one()


def simplex_instance(rng, k):
    """Simplex in R^k containing 0 and one point in each facet opposite a vertex."""
    while True:
        V = rng.standard_normal((k + 1, k))
        M = np.hstack([V, np.ones((k + 1, 1))])
        if abs(np.linalg.det(M)) > 1e-3:
            break
    X = V - convex_weights(rng, k + 1) @ V
    Q = np.empty_like(X)
    for i in range(k + 1):
        others = np.delete(X, i, axis=0)
        Q[i] = convex_weights(rng, k) @ others
    return X, Q


# ---------------------------------------------------------------------------
# single instances
# ---------------------------------------------------------------------------

def _row(suite, seed, i, family, n, m, length, margin, ok, **extra):
    return dict(suite=suite, seed=seed, instance=i, family=family, n=n, m=m,
                length=length, margin=margin, ok=bool(ok), **extra)


def len_bound_instance(seed, i, family, pipeline=True):
    rng = numerics.rng_stream(seed, 1, i)
    n = int(rng.integers(2, 5))
    K = length_family(family, n)
    if i % 10 == 0:
        # equality case: antipodal pair on bd K
        x = K.boundary_point(numerics.random_directions(rng, 1, n)[0])
        L = path_length(K, np.vstack([x, -x]))
        return _row("len-bound", seed, i, family, n, 2, L, L - 4.0,
                    abs(L - 4.0) <= EQUALITY_TOL, kind="antipodal")
    m = int(rng.integers(2, 7))
    pts, _ = outside_points_with_origin(K, m, rng)
    if pipeline:
        rep = verify_length_bound(K, pts, DEFAULT_TOL)
        L = rep.length
        ok = (L >= 4 - LENGTH_TOL and min(rep.halves) >= 2 - LENGTH_TOL
              and all(s >= -LENGTH_TOL for s in rep.shortcut_margins))
    else:
        L = path_length(K, pts)
        ok = L >= 4 - LENGTH_TOL
    return _row("len-bound", seed, i, family, n, m, L, L - 4.0, ok, kind="random")


def normal_bound_instance(seed, i, pipeline=False):
    rng = numerics.rng_stream(seed, 2, i)
    n = int(rng.integers(2, 5))
    m = int(rng.integers(2, 7))
    family, K = normal_family(rng, n)
    q = boundary_points_with_normal_origin(K, m, rng)
    if pipeline:
        rep = verify_normal_length_bound(K, q, DEFAULT_TOL, pipeline=True)
        L = rep.length
        ok = L >= 4 - NORMAL_TOL and rep.lifted_length >= 4 - NORMAL_TOL \
            and rep.reduced_length <= L + NORMAL_TOL
    else:
        L = path_length(K, q)
        ok = L >= 4 - NORMAL_TOL
    return _row("normal-bound", seed, i, family, n, m, L, L - 4.0, ok,
                kind="pipeline" if pipeline else "length")


def shortcut_instance(seed, i):
    rng = numerics.rng_stream(seed, 3, i)
    n = int(rng.integers(2, 5))
    m = int(rng.integers(2, 7))
    family = LENGTH_FAMILIES[i % 3]
    K = length_family(family, n)
    pts = rng.standard_normal((m, n)) * rng.uniform(0.2, 3.0)
    w = convex_weights(rng, m)
    res = shortcut(K, pts, w)
    scale = max(1.0, res.lhs)
    ok = res.margin >= -LENGTH_TOL * scale and abs(res.collinearity_gap) <= COLLINEAR_TOL * scale
    return _row("shortcut", seed, i, family, n, m, res.lhs, res.margin, ok,
                collinearity_gap=res.collinearity_gap)


def split_instance(seed, i):
    rng = numerics.rng_stream(seed, 4, i)
    n = int(rng.integers(2, 5))
    m = int(rng.integers(3, 9))
    pts = rng.standard_normal((m, n))
    w = convex_weights(rng, m)
    pts = pts - (w @ pts)  # 0 = sum w_i x_i
    sp = antipodal_split(pts, w)
    worst = max(sp.residual_a, sp.residual_b)
    ok = (worst <= CERT_TOL and len(sp.arc_a) >= 2 and len(sp.arc_b) >= 2
          and np.all(sp.coeffs_a >= 0) and np.all(sp.coeffs_b >= 0))
    return _row("split", seed, i, "gaussian", n, m, math.nan, -worst, ok,
                residual_a=sp.residual_a, residual_b=sp.residual_b,
                side_a=len(sp.arc_a), side_b=len(sp.arc_b))


def cover_instance(seed, i):
    rng = numerics.rng_stream(seed, 5, i)
    k = int(rng.integers(1, 5))
    X, Q = simplex_instance(rng, k)
    I, cert = simplex_cover(X, Q, DEFAULT_TOL)
    ok = len(I) >= 1 and cert.residual <= CERT_TOL
    return _row("cover", seed, i, "simplex", k, k + 1, math.nan, -cert.residual, ok,
                cover="".join(str(j) for j in I), residual=cert.residual)


def criticality_instance(seed, i):
    rng = numerics.rng_stream(seed, 6, i)
    n = int(rng.integers(2, 4))
    K, T = random_smooth_pair(rng, n)
    est = two_bounce_capacity(K, T, seed=seed)
    rep = criticality_residual(K, T, est.witness)
    ok = rep.passes(DEFAULT_TOL.criticality_tol)
    return _row("criticality", seed, i, f"{type(K).__name__}/{type(T).__name__}", n,
                est.witness.m, est.value, -rep.max_residual, ok,
                residual_max=rep.max_residual, multiplier_min=float(rep.multipliers.min()),
                normal_sum=float(np.linalg.norm(rep.normal_sum)))


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

@dataclass
class SuiteReport:
    name: str
    rows: list = field(default_factory=list)

    @property
    def violations(self):
        return sum(not r["ok"] for r in self.rows)

    @property
    def instances(self):
        return len(self.rows)


def _call(job):
    fn, args = job
    return fn(*args)


def _jobs(name, instances, seed, pipeline_every):
    if name == "len-bound":
        return [(len_bound_instance, (seed, i, fam)) for fam in LENGTH_FAMILIES
                for i in range(instances)]
    if name == "normal-bound":
        return [(normal_bound_instance, (seed, i, pipeline_every > 0 and i % pipeline_every == 0))
                for i in range(instances)]
    table = dict(shortcut=shortcut_instance, split=split_instance, cover=cover_instance,
                 criticality=criticality_instance)
    if name not in table:
        raise ValueError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}")
    return [(table[name], (seed, i)) for i in range(instances)]


SUITES = ("len-bound", "normal-bound", "shortcut", "split", "cover", "criticality")


def run_suite(name, instances, seed=0, workers=None, pipeline_every=20) -> SuiteReport:
    """Run one property suite.

    ``len-bound`` draws ``instances`` per body family. ``normal-bound``
    runs the full reduction pipeline on every ``pipeline_every``-th instance
    and checks the length alone on the rest.
    """
    jobs = _jobs(name, instances, seed, pipeline_every)
    nw = worker_count(workers)
    if nw > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(nw) as ex:
            rows = list(ex.map(_call, jobs, chunksize=max(1, len(jobs) // (8 * nw))))
    else:
        rows = [_call(j) for j in jobs]
    return SuiteReport(name, rows)
