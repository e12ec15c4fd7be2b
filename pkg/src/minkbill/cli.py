"""Command-line interface: ``minkbill {capacity,verify,mahler,trace,inradius}``.

Exit codes: 0 success, 1 usage or input error, 2 a checked inequality or
identity failed numerically.
"""

import argparse
import csv
import logging
import subprocess
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .billiards import criticality_residual, trace
from .bodies import NotSmoothError, find_inradius, smooth
from .bodyio import BodyFileError, load_body
from .capacity import FALSIFICATION, hz_capacity, two_bounce_capacity
from .config import DEFAULT_TOL
from .suites import ROW_FIELDS, SUITES, run_suite
from .svg import billiard_svg
from .volumes import mahler_volume

log = logging.getLogger("minkbill")

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


@dataclass
class RunManifest:
    subcommand: str
    bodies: list
    seed: int
    tolerances: dict
    outputs: list
    argv: list = field(default_factory=list)
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    build: str = field(default_factory=lambda: f"minkbill {__version__} ({_git_describe()})")

    def items(self):
        return asdict(self).items()

    def comment_lines(self):
        return [f"# {k}: {v}" for k, v in self.items()]


def write_csv(path, header, rows, manifest):
    with open(path, "w", newline="") as fh:
        for line in manifest.comment_lines():
            fh.write(line + "\n")
        w = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_svg(path, text):
    Path(path).write_text(text)


def _vector(text):
    try:
        return np.array([float(t) for t in text.replace(" ", "").split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _count(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a count, got {text!r}")
    if v < 1 or v != int(v):
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(v)


def _tolerance(text):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {key!r} needs a number, got {val!r}")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for claim violations here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _pair_args(p):
    p.add_argument("--body", required=True, help="body file for K (JSON)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--dual", action="store_true", help="use T = polar(K)")
    g.add_argument("--body2", help="body file for T (JSON)")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default: %(default)s)")
    common.add_argument("--tol", type=_tolerance, action="append", default=[], metavar="KEY=VAL",
                        help="override a tolerance, e.g. merge_tol=1e-7 (repeatable)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes, capped by MINKBILL_THREADS (default: 1)")
    common.add_argument("--log-level", default="WARNING", help="logging level (default: %(default)s)")

    top = _Parser(prog="minkbill", description="Minkowski billiards, capacities and volume products.",
                  formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("capacity", parents=[common], help="capacity of K x T by billiard search",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _pair_args(p)
    p.add_argument("--mmax", type=int, default=5, help="largest bounce count searched")
    p.add_argument("--starts", type=int, default=64, help="random starts per bounce count")
    p.add_argument("--smooth", type=float, default=None, metavar="S",
                   help="replace polytopes by power-sum smoothings with exponent S")
    p.add_argument("--out", default=None, help="CSV of per-branch results")
    p.add_argument("--svg", default=None, help="SVG of the witness orbit (n = 2)")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("verify", parents=[common], help="randomised property suites",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--suite", required=True, choices=SUITES + ("all",))
    p.add_argument("--instances", type=_count, default=1000,
                   help="instances per suite (per body family for len-bound)")
    p.add_argument("--pipeline-every", type=int, default=20,
                   help="normal-bound: run the full reduction on every k-th instance (0: never)")
    p.add_argument("--out", default=None, help="per-instance CSV")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mahler", parents=[common], help="volume product and comparison ratios",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--body", required=True, help="body file (JSON)")
    p.add_argument("--samples", type=_count, default=10 ** 7, help="Monte Carlo samples per body")
    p.add_argument("--out", default=None, help="CSV report")
    p.set_defaults(func=cmd_mahler)

    p = sub.add_parser("trace", parents=[common], help="iterate the bounce map",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _pair_args(p)
    p.add_argument("--q0", type=_vector, default=None,
                   help="start on bd K (default: boundary point in direction e_1)")
    p.add_argument("--p0", type=_vector, default=None,
                   help="start momentum on bd T (default: one that enters K)")
    p.add_argument("--bounces", type=int, default=20)
    p.add_argument("--out", default=None, help="CSV of bounce points and momenta")
    p.add_argument("--svg", default=None, help="SVG of the orbit (n = 2)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("inradius", parents=[common], help="largest r with r S inside K",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--body", required=True, help="body file for K (JSON)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--dual", action="store_true", help="use S = polar(K)")
    g.add_argument("--body2", help="body file for S (JSON)")
    p.add_argument("--starts", type=int, default=16)
    p.set_defaults(func=cmd_inradius)
    return top


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _config(args):
    try:
        return DEFAULT_TOL.override(**dict(args.tol))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad tolerance override: {exc}") from None


def _manifest(args, outputs):
    bodies = [b for b in (getattr(args, "body", None), getattr(args, "body2", None)) if b]
    if getattr(args, "dual", False):
        bodies.append("polar(K)")
    return RunManifest(args.command, bodies, args.seed, dict(args.tol),
                       [o for o in outputs if o], args.argv)


def _load_pair(args):
    K = load_body(args.body)
    T = K.polar() if args.dual else load_body(args.body2)
    if K.dim != T.dim:
        raise UsageError(f"K is {K.dim}-dimensional but T is {T.dim}-dimensional")
    return K, T


def _fmt(v):
    return " ".join(f"{x:.12g}" for x in np.atleast_1d(v))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_capacity(args):
    config = _config(args)
    K, T = _load_pair(args)
    if args.smooth is not None:
        if not K.smooth:
            K = smooth(K, args.smooth)
        if args.dual:
            T = K.polar()
        elif not T.smooth:
            T = smooth(T, args.smooth)
    if not (K.smooth and T.smooth and T.strictly_convex):
        closed = two_bounce_capacity(K, T, seed=args.seed, config=config)
        print(f"capacity (4 * inradius): {closed.value:.6f}")
        print("search skipped: bodies are not smooth; pass --smooth S to run it")
        return EXIT_OK
    est = hz_capacity(K, T, m_max=args.mmax, starts=args.starts, seed=args.seed,
                      config=config, workers=args.workers)
    d = est.diagnostics
    print(f"capacity: {est.value:.6f} (relative tolerance {config.agreement_rtol:g})")
    print(f"4 * inradius cross-check: {d['two_bounce_value']:.6f} "
          f"(relative gap {d['relative_gap']:.2e})")
    print(f"witness: {est.witness.m} bounces, max criticality residual {d['residual_max']:.2e}")
    if est.status == FALSIFICATION:
        print(f"status: {FALSIFICATION}")
    if args.out:
        rows = []
        for m, b in d["branches"].items():
            try:
                res = criticality_residual(K, T, b.best_points).max_residual
            except ValueError:
                res = float("nan")
            rows.append(dict(m=m, best_length=repr(b.best_length), final_m=b.final_m,
                             converged_starts=b.converged_starts, collapses=b.collapses,
                             residual_max=repr(res)))
        write_csv(args.out, ["m", "best_length", "final_m", "converged_starts", "collapses",
                             "residual_max"], rows, _manifest(args, [args.out, args.svg]))
    if args.svg:
        if K.dim != 2:
            raise UsageError("--svg needs a planar body")
        write_svg(args.svg, billiard_svg(K, T, est.witness.bounce_points,
                                         metadata=dict(_manifest(args, [args.out, args.svg]).items()),
                                         title=f"capacity {est.value:.6f}"))
    return EXIT_VIOLATION if est.status == FALSIFICATION else EXIT_OK


def cmd_verify(args):
    names = SUITES if args.suite == "all" else (args.suite,)
    rows, total_bad = [], 0
    for name in names:
        rep = run_suite(name, args.instances, seed=args.seed, workers=args.workers,
                        pipeline_every=args.pipeline_every)
        total_bad += rep.violations
        rows.extend(rep.rows)
        print(f"{name}: {rep.instances} instances, {rep.violations} violations")
    if args.out:
        extra = sorted({k for r in rows for k in r} - set(ROW_FIELDS))
        write_csv(args.out, list(ROW_FIELDS) + extra, rows, _manifest(args, [args.out]))
    return EXIT_OK if total_bad == 0 else EXIT_VIOLATION


def cmd_mahler(args):
    config = _config(args)
    K = load_body(args.body)
    rep = mahler_volume(K, samples=args.samples, seed=args.seed, config=config)
    print(f"volume product: {rep.value:.6g} +- {rep.ci_halfwidth:.2g} ({rep.method})")
    print(f"mahler ratio nu n!/4^n: {rep.mahler_ratio:.3f} +- {rep.mahler_ci:.2g}"
          f" [{rep.verdicts['mahler_lower']}]")
    print(f"santalo ratio nu/kappa_n^2: {rep.santalo_ratio:.3f} +- {rep.santalo_ci:.2g}"
          f" [{rep.verdicts['santalo_upper']}]")
    print(f"kuperberg ratio nu n!/pi^n: {rep.kuperberg_ratio:.3f}")
    if args.out:
        row = dict(dim=rep.dim, volume=repr(rep.volume.value), volume_ci=repr(rep.volume.ci_halfwidth),
                   polar_volume=repr(rep.polar_volume.value),
                   polar_volume_ci=repr(rep.polar_volume.ci_halfwidth),
                   product=repr(rep.value), product_ci=repr(rep.ci_halfwidth),
                   mahler_ratio=repr(rep.mahler_ratio), santalo_ratio=repr(rep.santalo_ratio),
                   kuperberg_ratio=repr(rep.kuperberg_ratio), method=rep.method, **rep.verdicts)
        write_csv(args.out, list(row), [row], _manifest(args, [args.out]))
    violated = rep.verdicts["mahler_lower"] == "violated" or rep.verdicts["santalo_upper"] == "violated"
    return EXIT_VIOLATION if violated else EXIT_OK


def _default_start(K, T):
    q0 = K.boundary_point(np.eye(K.dim)[0])
    n = K.normal(q0)
    tang = np.roll(n, 1) * np.array([-1.0] + [1.0] * (K.dim - 1))
    # flow velocity -grad g_T(p) must point into K, so p leans along +n
    p0 = T.boundary_point(n / np.linalg.norm(n) + 0.4 * tang / np.linalg.norm(tang))
    return q0, p0


def cmd_trace(args):
    config = _config(args)
    K, T = _load_pair(args)
    if not (K.smooth and T.smooth):
        raise UsageError("trace needs smooth bodies")
    q0, p0 = _default_start(K, T)
    if args.q0 is not None:
        q0 = K.boundary_point(args.q0)
    if args.p0 is not None:
        p0 = T.boundary_point(args.p0)
    if len(q0) != K.dim or len(p0) != K.dim:
        raise UsageError("start vectors have the wrong dimension")
    orbit = trace(K, T, q0, p0, args.bounces, config)
    steps = len(orbit.points) - 1
    print(f"{steps} bounces traced" + (f"; stopped: {orbit.message}" if orbit.gliding else ""))
    if args.out:
        rows = []
        for i, (q, p) in enumerate(zip(orbit.points, orbit.momenta)):
            r = dict(i=i)
            r.update({f"q{j}": repr(float(v)) for j, v in enumerate(q)})
            r.update({f"p{j}": repr(float(v)) for j, v in enumerate(p)})
            if i > 0:
                n = K.normal(q)
                r["lambda"] = repr(float((p - orbit.momenta[i - 1]) @ n / (n @ n)))
            rows.append(r)
        header = ["i"] + [f"q{j}" for j in range(K.dim)] + [f"p{j}" for j in range(K.dim)] + ["lambda"]
        man = _manifest(args, [args.out, args.svg])
        man.tolerances = dict(man.tolerances, gliding=orbit.gliding)
        write_csv(args.out, header, rows, man)
    if args.svg:
        if K.dim != 2:
            raise UsageError("--svg needs a planar body")
        meta = dict(_manifest(args, [args.out, args.svg]).items(), gliding=orbit.gliding)
        write_svg(args.svg, billiard_svg(K, T, orbit.points, metadata=meta, closed=False,
                                         title=f"{steps}-bounce orbit"))
    return EXIT_OK


def cmd_inradius(args):
    config = _config(args)
    K = load_body(args.body)
    S = K.polar() if args.dual else load_body(args.body2)
    if K.dim != S.dim:
        raise UsageError("bodies have different dimensions")
    r = find_inradius(K, S, starts=args.starts, seed=args.seed, config=config)
    print(f"inradius: {r.value:.12g}")
    print(f"contact point: {_fmt(r.point)}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BodyFileError, UsageError, NotSmoothError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
