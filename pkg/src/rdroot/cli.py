"""Command-line front end.

Subcommands:
    track    run root tracking and write a JSON trace plus a CSV projection
    ba       run BA on a beta grid (reverse annealing or independent starts)
    compare  compare a trace with a reference, or sweep orders and grid densities
    spectra  Jacobian eigenvalues along a beta grid with bifurcation classification

Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .ba_core import DEFAULT_MAX_ITER, FixedPointResult, ba_fixed_point, rd_functionals
from .implicit import SingularJacobianError
from .oracles import binary_hamming_marginal
from .problem import RdProblem, builtin, check
from .tracker import (
    TrackConfig,
    TrackingError,
    TrackTrace,
    ba_reverse_anneal,
    classify_bifurcation,
    extrapolate,
    locate_sweep_events,
    root_track,
    spectra,
)

log = logging.getLogger("rdroot")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input: unknown problem, unreadable file, inconsistent options."""


def load_problem(spec: str) -> RdProblem:
    """A built-in name or a path to a problem JSON file."""
    try:
        return check(builtin(spec))
    except KeyError:
        pass
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"problem {spec!r} is neither a built-in name nor an existing file")
    try:
        return check(RdProblem.load(path))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read problem file {spec}: {exc}") from exc


def make_manifest(command: str, args: argparse.Namespace, outputs: list[str], config: dict | None = None) -> dict:
    options = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {
        "command": command,
        "problem": getattr(args, "problem", None),
        "options": options,
        "config": config or {},
        "outputs": outputs,
        "seed": None,
        "version": __version__,
    }


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: Path | None, header: list[str], rows: list[list], manifest: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# rdroot {__version__}\n")
    buf.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        path.write_text(text)
    return text


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, list(reader)


def beta_grid(beta_max: float, beta_min: float, points: int, spacing: str) -> np.ndarray:
    """Decreasing grid from beta_max to beta_min."""
    if points < 1:
        raise UsageError("need at least one grid point")
    if points == 1:
        return np.array([beta_max])
    if spacing == "log":
        if beta_min <= 0:
            raise UsageError("a log grid needs beta-min > 0")
        return np.geomspace(beta_max, beta_min, points)
    return np.linspace(beta_max, beta_min, points)


def _config_from_args(args: argparse.Namespace) -> TrackConfig:
    try:
        return TrackConfig(
            beta0=args.beta0,
            step=args.step,
            order=args.order,
            delta=args.delta,
            beta_min=args.beta_min,
            ba_tol=args.ba_tol,
            ba_max_iter=args.ba_max_iter,
            eig_threshold=args.eig_threshold,
            classify_every=args.classify_every,
            locate=not args.no_locate,
            log_grid=args.log_grid,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# track


def cmd_track(args: argparse.Namespace) -> int:
    problem = load_problem(args.problem)
    config = _config_from_args(args)
    out = Path(args.out)
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    manifest = make_manifest("track", args, [str(out), str(csv_path)], config.to_dict())
    trace = root_track(problem, config)
    out.write_text(json.dumps(trace.to_json(manifest), indent=1))
    csv_path.write_text(trace.to_csv(manifest))
    segments = 1 + len(trace.bifurcations)
    print(f"points: {len(trace.points)}  segments: {segments}  bifurcations: {len(trace.bifurcations)}")
    for rec in trace.bifurcations:
        rep = rec.report
        where = f"located at beta={rep.beta:.10g}, " if rep else ""
        label = rep.classification if rep else "unclassified"
        print(
            f"  stop at beta={rec.beta_stop:.6g}: {where}{label}; support "
            f"{list(rec.support_before.indices)} -> {list(rec.support_after.indices)}"
        )
    print(f"BA invocations: {trace.ba_invocations}  BA iterations: {trace.ba_iterations}"
          f"  (locating: {trace.locate_iterations})")
    for w in trace.warnings:
        print(f"warning: {w}")
    print("wall time: " + ", ".join(f"{k} {v:.3f}s" for k, v in trace.timings.items()))
    return EXIT_OK


# ba


def _ba_row(problem: RdProblem, beta: float, res: FixedPointResult) -> list:
    cp = rd_functionals(problem, res.encoder)
    return [beta, *res.marginal.tolist(), res.iterations, res.residual, int(res.converged), cp.distortion, cp.rate]


def _independent_one(job):
    problem_json, beta, tol, max_iter = job
    problem = RdProblem.from_json(problem_json)
    m = problem.n_repro
    return ba_fixed_point(problem, np.full(m, 1.0 / m), beta, tol, max_iter)


def run_independent(problem: RdProblem, betas, tol: float, max_iter: int, jobs: int) -> list[FixedPointResult]:
    """BA from the uniform marginal at each beta, optionally over worker processes."""
    if jobs <= 1:
        return [_independent_one((problem.to_json(), float(b), tol, max_iter)) for b in betas]
    payload = [(problem.to_json(), float(b), tol, max_iter) for b in betas]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_independent_one, payload, chunksize=max(1, len(payload) // (4 * jobs))))


def cmd_ba(args: argparse.Namespace) -> int:
    problem = load_problem(args.problem)
    if args.beta is not None:
        betas = np.array([args.beta])
    else:
        betas = beta_grid(args.beta_max, args.beta_min, args.points, args.grid)
    started = time.perf_counter()
    if args.mode == "anneal":
        results = ba_reverse_anneal(problem, betas, args.tol, args.max_iter)
    else:
        results = run_independent(problem, betas, args.tol, args.max_iter, args.jobs)
    wall = time.perf_counter() - started
    m = problem.n_repro
    header = ["beta"] + [f"r{i + 1}" for i in range(m)] + ["iterations", "residual", "converged", "D", "R"]
    rows = [_ba_row(problem, float(b), res) for b, res in zip(betas, results)]
    out = Path(args.out) if args.out else None
    text = write_csv(out, header, rows, make_manifest("ba", args, [str(out)] if out else []))
    if out is None:
        sys.stdout.write(text)
    failed = sum(not r.converged for r in results)
    total = sum(r.iterations for r in results)
    print(f"points: {len(results)}  BA iterations: {total}  not converged: {failed}  wall time: {wall:.3f}s",
          file=sys.stderr)
    return EXIT_OK


# compare


def load_reference(spec: str, betas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference marginals: an oracle name (binary-hamming:p=...) or a BA CSV."""
    if spec.startswith("binary-hamming"):
        p = builtin(spec).source[0]
        return betas, np.array([binary_hamming_marginal(p, float(b)) for b in betas])
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"reference {spec!r} is neither an oracle name nor an existing file")
    header, rows = read_csv(path)
    cols = [i for i, h in enumerate(header) if h.startswith("r") and h[1:].isdigit()]
    ref_betas = np.array([float(r[0]) for r in rows])
    ref = np.array([[float(r[i]) for i in cols] for r in rows])
    return ref_betas, ref


def trace_errors(trace: TrackTrace, ref_betas: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """L-infinity error of the trace (via extrapolation) at reference betas inside its range."""
    top, bottom = trace.betas[0], trace.betas[-1]
    mask = (ref_betas <= top) & (ref_betas >= bottom)
    betas = ref_betas[mask]
    errs = np.array([np.max(np.abs(extrapolate(trace, float(b)) - r)) for b, r in zip(betas, ref[mask])])
    return betas, errs


def max_error_off_heuristic(trace: TrackTrace, reference) -> float:
    """Largest grid-point error against ``reference(beta)``, skipping BA-refreshed points after a stop."""
    skip = {i for i in trace.heuristic_indices() if i > 0}
    errs = [
        float(np.max(np.abs(pt.embedded() - reference(pt.beta))))
        for i, pt in enumerate(trace.points)
        if i not in skip
    ]
    return max(errs)


def tail_slope(costs, errors, tail: int = 3) -> float:
    """Least-squares slope of log(error) against log(cost) over the last ``tail`` points."""
    x = np.log(np.asarray(costs, dtype=float)[-tail:])
    y = np.log(np.asarray(errors, dtype=float)[-tail:])
    return float(np.polyfit(x, y, 1)[0])


def order_sweep(
    p: float,
    orders: list[int],
    densities: list[int],
    beta0: float = 32.0,
    beta_min: float = 0.5,
    delta: float = 0.01,
    ba_tol: float = 1e-15,
) -> list[dict]:
    """Tracking error against the binary-Hamming oracle for each order and grid density.

    Grids are uniform in log2(beta) with ``density`` steps from beta0 to beta_min.
    The cost of a run is its number of grid points; each point costs one
    derivative evaluation.
    """
    problem = builtin(f"binary-hamming:p={p}")
    span = math.log2(beta0 / beta_min)
    rows = []
    for order in orders:
        for density in densities:
            config = TrackConfig(
                beta0=beta0, step=-span / density, order=order, delta=delta, beta_min=beta_min,
                ba_tol=ba_tol, locate=False, log_grid=True,
            )
            trace = root_track(problem, config)
            err = max_error_off_heuristic(trace, lambda b: binary_hamming_marginal(p, b))
            rows.append({
                "order": order,
                "density": density,
                "cost": len(trace.points),
                "max_error": err,
                "wall_time": trace.timings["total"],
            })
    return rows


def cmd_compare(args: argparse.Namespace) -> int:
    out = Path(args.out) if args.out else None
    if args.sweep:
        orders = [int(v) for v in args.orders.split(",")]
        densities = [int(v) for v in args.densities.split(",")]
        if len(densities) < 2:
            raise UsageError("a sweep needs at least two densities")
        spec = builtin(args.problem)
        if spec.n_repro != 2 or not args.problem.startswith("binary-hamming"):
            raise UsageError("order sweeps are defined against the binary-Hamming oracle")
        rows = order_sweep(float(spec.source[0]), orders, densities, args.beta0, args.beta_min, args.delta)
        slopes = {}
        for order in orders:
            sub = [r for r in rows if r["order"] == order]
            slopes[order] = tail_slope([r["cost"] for r in sub], [r["max_error"] for r in sub], args.tail)
        manifest = make_manifest("compare", args, [str(out)] if out else [])
        manifest["slopes"] = {str(k): v for k, v in slopes.items()}
        text = write_csv(out, ["order", "density", "cost", "max_error"],
                         [[r["order"], r["density"], r["cost"], r["max_error"]] for r in rows], manifest)
        if out is None:
            sys.stdout.write(text)
        for order, slope in slopes.items():
            print(f"order {order}: tail slope of log error vs log cost = {slope:.3f}", file=sys.stderr)
        for r in rows:
            print(f"  L={r['order']} density={r['density']} wall time {r['wall_time']:.3f}s", file=sys.stderr)
        return EXIT_OK

    if not args.trace or not args.reference:
        raise UsageError("compare needs --trace and --reference (or --sweep)")
    try:
        trace = TrackTrace.from_json(json.loads(Path(args.trace).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read trace {args.trace}: {exc}") from exc
    if args.reference == "self":
        ref_betas, ref = trace.betas, trace.marginals()
    else:
        ref_betas, ref = load_reference(args.reference, trace.betas)
    betas, errs = trace_errors(trace, ref_betas, ref)
    heur = {trace.points[i].beta for i in trace.heuristic_indices() if i > 0}
    off = [e for b, e in zip(betas, errs) if b not in heur]
    manifest = make_manifest("compare", args, [str(out)] if out else [])
    text = write_csv(out, ["beta", "linf_error"], [[b, e] for b, e in zip(betas, errs)], manifest)
    if out is None:
        sys.stdout.write(text)
    print(f"points compared: {len(errs)}  max error: {np.max(errs):.3e}  "
          f"max error off the heuristic points: {max(off) if off else 0.0:.3e}", file=sys.stderr)
    return EXIT_OK


# spectra


def spectra_rows(problem: RdProblem, betas, results, eig_threshold: float, delta: float, snap: float = 1e-7):
    rows = []
    for beta, res in zip(betas, results):
        if not res.converged:
            rows.append([beta, "", math.nan, math.nan, "ba-failed", 0])
            continue
        spec = spectra(problem, res.encoder, res.marginal, beta, snap)
        report = classify_bifurcation(problem, res.encoder, res.marginal, beta, eig_threshold, delta,
                                      support=spec["support"])
        rows.append([
            beta,
            " ".join(str(i + 1) for i in spec["support"]),
            float(spec["encoder"][0]),
            float(spec["marginal"][0]),
            report.classification,
            1,
        ])
    return rows


def cmd_spectra(args: argparse.Namespace) -> int:
    problem = load_problem(args.problem)
    betas = beta_grid(args.beta_max, args.beta_min, args.points, args.grid)[::-1]
    results = run_independent(problem, betas, args.tol, args.max_iter, args.jobs)
    rows = spectra_rows(problem, betas, results, args.eig_threshold, args.delta)
    events = locate_sweep_events(problem, betas, results, args.eig_threshold, args.delta)
    out = Path(args.out) if args.out else None
    events_path = Path(args.events) if args.events else (out.with_suffix(".events.json") if out else None)
    manifest = make_manifest("spectra", args, [str(p) for p in (out, events_path) if p])
    header = ["beta", "support", "min_abs_eig_encoder", "min_abs_eig_marginal", "classification", "converged"]
    text = write_csv(out, header, rows, manifest)
    if out is None:
        sys.stdout.write(text)
    payload = {"version": __version__, "manifest": manifest, "events": [e.to_dict() for e in events]}
    if events_path is not None:
        events_path.write_text(json.dumps(payload, indent=1))
    for e in events:
        print(
            f"event at beta={e.beta:.10g}: {e.report.classification} "
            f"(min |eig| encoder {e.report.min_abs_eigenvalue:.2e}, min marginal {e.report.min_marginal:.3g}, "
            f"min marginal-Jacobian eig {e.marginal_eigs.min():.3g}); support "
            f"{[i + 1 for i in e.support_below]} below, {[i + 1 for i in e.support_above]} above",
            file=sys.stderr,
        )
    failed = sum(not r.converged for r in results)
    if failed:
        print(f"{failed} grid points did not converge", file=sys.stderr)
    return EXIT_OK


def _add_track_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--order", type=int, default=3, help="Taylor order L")
    p.add_argument("--step", type=float, default=-0.05, help="signed step (negative)")
    p.add_argument("--beta0", type=float, default=32.0)
    p.add_argument("--beta-min", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=0.01, help="cluster-mass threshold")
    p.add_argument("--ba-tol", type=float, default=1e-8)
    p.add_argument("--ba-max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--eig-threshold", type=float, default=1e-6)
    p.add_argument("--classify-every", type=int, default=0)
    p.add_argument("--log-grid", action="store_true", help="step is in log2(beta)")
    p.add_argument("--no-locate", action="store_true", help="skip root-finding of bifurcation points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdroot", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"rdroot {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="root tracking with a Taylor method")
    p.add_argument("--problem", required=True, help="built-in name or problem JSON")
    _add_track_options(p)
    p.add_argument("--out", required=True, help="trace JSON path")
    p.add_argument("--csv", help="CSV path (default: next to --out)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("ba", help="BA on a beta grid")
    p.add_argument("--problem", required=True)
    p.add_argument("--mode", choices=["anneal", "independent"], default="anneal")
    p.add_argument("--init", choices=["uniform"], default="uniform", help="initial marginal")
    p.add_argument("--beta", type=float, help="a single beta instead of a grid")
    p.add_argument("--beta-max", type=float, default=32.0)
    p.add_argument("--beta-min", type=float, default=0.5)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--grid", choices=["linear", "log"], default="log")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ba)

    p = sub.add_parser("compare", help="errors of a trace, or an order/density sweep")
    p.add_argument("--trace", help="trace JSON")
    p.add_argument("--reference", help="'self', an oracle such as binary-hamming:p=0.3, or a BA CSV")
    p.add_argument("--sweep", action="store_true", help="order and density sweep against the oracle")
    p.add_argument("--problem", default="binary-hamming:p=0.3")
    p.add_argument("--orders", default="1,2,3")
    p.add_argument("--densities", default="25,50,100,200,400")
    p.add_argument("--beta0", type=float, default=32.0)
    p.add_argument("--beta-min", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--tail", type=int, default=3, help="points used for the slope fit")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("spectra", help="Jacobian eigenvalues and bifurcation classification")
    p.add_argument("--problem", required=True)
    p.add_argument("--beta-min", type=float, default=0.5)
    p.add_argument("--beta-max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--grid", choices=["linear", "log"], default="linear")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=200_000)
    p.add_argument("--eig-threshold", type=float, default=1e-6)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--events", help="JSON path for located events")
    p.set_defaults(func=cmd_spectra)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrackingError, SingularJacobianError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
