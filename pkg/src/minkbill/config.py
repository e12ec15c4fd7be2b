"""Central tolerance record and worker-count plumbing."""

import os
from dataclasses import dataclass, fields, replace

THREADS_ENV = "MINKBILL_THREADS"


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical tolerances shared across the package.

    Attributes
    ----------
    boundary_tol : float
        Allowed deviation of a gauge value from 1 for points declared on a boundary.
    criticality_tol : float
        Max norm of a Lagrange residual for a trajectory to count as critical.
    search_tol : float
        Simplex-diameter stopping tolerance of the local search.
    hull_tol : float
        Max substitution residual of a convex-hull membership certificate.
    mc_ci_level : float
        Confidence level of Monte Carlo intervals.
    merge_tol : float
        Euclidean distance below which consecutive bounce points are merged.
    agreement_rtol : float
        Relative tolerance for the two-bounce vs. search capacity agreement.
    root_xtol : float
        Bracket width at which ray/boundary bisection stops.
    """

    boundary_tol: float = 1e-9
    criticality_tol: float = 1e-6
    search_tol: float = 1e-10
    hull_tol: float = 1e-9
    mc_ci_level: float = 0.99
    merge_tol: float = 1e-6
    agreement_rtol: float = 1e-3
    root_xtol: float = 1e-13

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"tolerance {f.name} must be positive")
        if not self.mc_ci_level < 1:
            raise ValueError("mc_ci_level must lie in (0, 1)")

    def override(self, **kwargs) -> "ToleranceConfig":
        return replace(self, **kwargs)


DEFAULT_TOL = ToleranceConfig()


def worker_count(requested=None) -> int:
    """Number of parallel workers, capped by ``MINKBILL_THREADS`` when set."""
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested is not None else 1
    if cap:
        try:
            n = min(n, max(1, int(cap))) if requested is not None else max(1, int(cap))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, int(n))
