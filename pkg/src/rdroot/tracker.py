"""Tracking the optimal reproduction marginal as beta decreases.

Between bifurcations the root of Id - BA_beta is advanced with a Taylor
method built on implicit derivatives.  When a coordinate falls to the
cluster-mass threshold delta, that cluster is removed, the problem is reduced
to the surviving letters and BA is run once at the current beta to land back
on a fixed point.  Bifurcations are classified by the smallest eigenvalue of
the encoder-coordinate Jacobian together with the smallest marginal entry.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .ba_core import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    FixedPointResult,
    _weights,
    ba_fixed_point,
    encoder_from_marginal,
    jacobian_encoder,
    jacobian_marginal,
    rd_functionals,
)
from .implicit import SingularJacobianError, implicit_derivatives, taylor_polynomial, TaylorPolynomial
from .problem import RdProblem, SupportSet, check, embed, reduce
from .tensors import RdTensorProvider

log = logging.getLogger(__name__)

EVENT_NONE = "none"
EVENT_THRESHOLD = "threshold-crossed"
EVENT_REFRESH = "ba-refresh"
EVENT_CLASSIFIED = "bifurcation-classified"

NONE = "none"
CLUSTER_VANISHING = "cluster-vanishing"
SUPPORT_SWITCHING = "possibly-support-switching"


class TrackingError(RuntimeError):
    """Numerical failure while tracking (BA non-convergence, singular Jacobian)."""


@dataclass
class TrackConfig:
    """Settings for a tracking run.

    Attributes:
        beta0: starting multiplier, where BA is run from the uniform marginal.
        step: signed step in beta; must be negative.
        order: Taylor order L.
        delta: cluster-mass threshold in (0, 1).
        beta_min: tracking stops once beta reaches this value.
        ba_tol, ba_max_iter: stopping rule for every BA invocation.
        eig_threshold: encoder-Jacobian eigenvalues below this count as vanishing.
        classify_every: also classify every k-th grid point (0 = only at stops).
        locate: root-find the bifurcation point after each threshold crossing.
        log_grid: take ``step`` in log2(beta) rather than in beta, so grid
            points are uniform on a logarithmic axis.
    """

    beta0: float
    step: float
    order: int = 3
    delta: float = 0.01
    beta_min: float = 0.0
    ba_tol: float = DEFAULT_TOL
    ba_max_iter: int = DEFAULT_MAX_ITER
    eig_threshold: float = 1e-6
    classify_every: int = 0
    locate: bool = True
    log_grid: bool = False

    def __post_init__(self) -> None:
        if not self.step < 0:
            raise ValueError("step must be negative: tracking runs towards smaller beta")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.beta_min < 0 or self.beta_min >= self.beta0:
            raise ValueError("need 0 <= beta_min < beta0")
        if self.log_grid and self.beta_min <= 0:
            raise ValueError("a logarithmic grid needs beta_min > 0")

    def grid_beta(self, start: float, n: int) -> float:
        """The n-th grid point of a segment starting at ``start``."""
        if self.log_grid:
            return start * 2.0 ** (n * self.step)
        return start + n * self.step

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BifurcationReport:
    min_abs_eigenvalue: float
    min_marginal: float
    classification: str
    beta: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class GridPoint:
    """One grid point: the approximation on the current support and its expansion."""

    beta: float
    r_tilde: np.ndarray
    support: SupportSet
    coeffs: np.ndarray  # (L+1, |support|), row k = d^k r / k!
    event: str = EVENT_NONE
    report: BifurcationReport | None = None

    def polynomial(self) -> TaylorPolynomial:
        return TaylorPolynomial(self.coeffs)

    def embedded(self) -> np.ndarray:
        return embed(self.r_tilde, self.support)

    def evaluate(self, beta: float) -> np.ndarray:
        """Expansion value at ``beta`` on the full alphabet."""
        return embed(self.polynomial()(beta - self.beta), self.support)


@dataclass
class BifurcationRecord:
    beta_stop: float
    beta_previous: float | None
    support_before: SupportSet
    support_after: SupportSet
    report: BifurcationReport | None
    ba_iterations: int
    locate_iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "beta_stop": self.beta_stop,
            "beta_previous": self.beta_previous,
            "support_before": list(self.support_before.indices),
            "support_after": list(self.support_after.indices),
            "report": self.report.to_dict() if self.report else None,
            "ba_iterations": self.ba_iterations,
            "locate_iterations": self.locate_iterations,
        }


@dataclass
class TrackTrace:
    problem: RdProblem
    config: TrackConfig
    points: list[GridPoint] = field(default_factory=list)
    bifurcations: list[BifurcationRecord] = field(default_factory=list)
    ba_invocations: int = 0
    ba_iterations: int = 0
    locate_iterations: int = 0
    warnings: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)  # wall time per phase; not serialised

    @property
    def betas(self) -> np.ndarray:
        return np.array([pt.beta for pt in self.points])

    def marginals(self) -> np.ndarray:
        return np.array([pt.embedded() for pt in self.points])

    def supports(self) -> list[tuple[int, ...]]:
        return [pt.support.indices for pt in self.points]

    def heuristic_indices(self) -> list[int]:
        return [i for i, pt in enumerate(self.points) if pt.event == EVENT_REFRESH]

    def to_json(self, manifest: dict | None = None) -> dict:
        return {
            "version": __version__,
            "manifest": manifest or {},
            "problem": self.problem.to_json(),
            "config": self.config.to_dict(),
            "ba_invocations": self.ba_invocations,
            "ba_iterations": self.ba_iterations,
            "locate_iterations": self.locate_iterations,
            "bifurcations": [b.to_dict() for b in self.bifurcations],
            "warnings": list(self.warnings),
            "points": [
                {
                    "beta": pt.beta,
                    "support": list(pt.support.indices),
                    "r_tilde": pt.r_tilde.tolist(),
                    "taylor_coeffs": pt.coeffs.tolist(),
                    "event": pt.event,
                    "report": pt.report.to_dict() if pt.report else None,
                }
                for pt in self.points
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrackTrace":
        problem = RdProblem.from_json(data["problem"])
        config = TrackConfig(**data["config"])
        trace = cls(problem, config)
        m = problem.n_repro
        for item in data["points"]:
            support = SupportSet(tuple(item["support"]), m)
            rep = item.get("report")
            trace.points.append(
                GridPoint(
                    item["beta"],
                    np.asarray(item["r_tilde"], dtype=float),
                    support,
                    np.asarray(item["taylor_coeffs"], dtype=float),
                    item["event"],
                    BifurcationReport(**rep) if rep else None,
                )
            )
        for item in data.get("bifurcations", []):
            rep = item.get("report")
            trace.bifurcations.append(
                BifurcationRecord(
                    item["beta_stop"],
                    item["beta_previous"],
                    SupportSet(tuple(item["support_before"]), m),
                    SupportSet(tuple(item["support_after"]), m),
                    BifurcationReport(**rep) if rep else None,
                    item["ba_iterations"],
                    item.get("locate_iterations", 0),
                )
            )
        trace.ba_invocations = data.get("ba_invocations", 0)
        trace.ba_iterations = data.get("ba_iterations", 0)
        trace.locate_iterations = data.get("locate_iterations", 0)
        trace.warnings = list(data.get("warnings", []))
        return trace

    def to_csv(self, manifest: dict | None = None) -> str:
        """CSV projection with 17 significant digits; manifest lines are '#' comments."""
        buf = io.StringIO()
        buf.write(f"# rdroot {__version__}\n")
        if manifest:
            buf.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
        m = self.problem.n_repro
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["beta"] + [f"r{i + 1}" for i in range(m)] + ["D", "R", "min_marginal", "event"])
        for pt in self.points:
            r = pt.embedded()
            r_pos = np.clip(r, 0.0, None)
            if r_pos.sum() > 0:
                q = encoder_from_marginal(self.problem, r_pos / r_pos.sum(), pt.beta)
                cp = rd_functionals(self.problem, q)
                dist, rate = cp.distortion, cp.rate
            else:
                dist = rate = float("nan")
            row = [pt.beta, *r.tolist(), dist, rate, float(np.min(pt.r_tilde)), pt.event]
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
        return buf.getvalue()


@dataclass
class Segment:
    points: list[GridPoint]
    last_r: np.ndarray
    last_beta: float
    stop: str  # "threshold" | "beta_min" | "singular"
    error: str | None = None


def _expansion(problem: RdProblem, r: np.ndarray, beta: float, order: int) -> np.ndarray:
    provider = RdTensorProvider(problem, order)
    derivset = implicit_derivatives(provider, r, beta, order)
    return taylor_polynomial(derivset).coeffs


def track_to_bifurcation(
    problem: RdProblem,
    r0: np.ndarray,
    beta0: float,
    config: TrackConfig,
    support: SupportSet | None = None,
    first_event: str = EVENT_NONE,
) -> Segment:
    """Advance a root of the (reduced) problem with a Taylor method until a cluster reaches delta.

    ``support`` records where the problem's letters sit in the original
    alphabet; it defaults to the full reproduction alphabet of ``problem``.
    The returned segment's points all have every entry above delta; the
    first approximation that does not is returned as ``last_r``.
    """
    support = support or SupportSet.full(problem.n_repro)
    r = np.asarray(r0, dtype=float)
    n = 0
    beta = beta0
    points: list[GridPoint] = []
    stop = "beta_min"
    error = None
    while True:
        if np.min(r) <= config.delta:
            stop = "threshold"
            break
        try:
            coeffs = _expansion(problem, r, beta, config.order)
        except SingularJacobianError as exc:
            stop, error = "singular", str(exc)
            break
        event = first_event if n == 0 else EVENT_NONE
        pt = GridPoint(beta, r.copy(), support, coeffs, event)
        if config.classify_every and n % config.classify_every == 0:
            q = encoder_from_marginal(problem, np.clip(r, 0, None), beta)
            pt.report = classify_bifurcation(problem, q, r, beta, config.eig_threshold, config.delta)
        points.append(pt)
        if beta <= config.beta_min:
            break
        n += 1
        next_beta = config.grid_beta(beta0, n)
        if next_beta <= config.beta_min:
            next_beta = config.beta_min
        r = pt.polynomial()(next_beta - beta)
        beta = next_beta
    return Segment(points, r, beta, stop, error)


def classify_bifurcation(
    problem: RdProblem,
    q: np.ndarray,
    r: np.ndarray,
    beta: float,
    eig_threshold: float = 1e-6,
    marginal_threshold: float = 0.01,
    support: Sequence[int] | None = None,
) -> BifurcationReport:
    """Classify a (near-)fixed point with the encoder-Jacobian flowchart.

    No eigenvalue below ``eig_threshold`` means no bifurcation.  Otherwise a
    marginal entry below ``marginal_threshold`` (over ``support``, by default
    the non-zero entries of ``r``) means a cluster is vanishing; if none is
    small, the point may be a support switch.
    """
    eig = float(np.min(np.abs(np.linalg.eigvals(jacobian_encoder(problem, q, beta)))))
    r = np.asarray(r, dtype=float)
    idx = np.flatnonzero(r != 0) if support is None else np.asarray(list(support), dtype=int)
    min_marg = float(np.min(r[idx])) if idx.size else 0.0
    if eig >= eig_threshold:
        label = NONE
    elif min_marg < marginal_threshold:
        label = CLUSTER_VANISHING
    else:
        label = SUPPORT_SWITCHING
    return BifurcationReport(eig, min_marg, label, float(beta))


def growth_factors(problem: RdProblem, r: np.ndarray, beta: float) -> np.ndarray:
    """sum_x p(x) exp(-beta d(x, j)) / Z(x) for every letter j.

    Equals 1 on the support of a fixed point; a letter outside the support
    becomes admissible where its factor reaches 1.
    """
    w = _weights(problem, beta)  # M x N, shifted per x
    z = np.asarray(r, dtype=float) @ w
    return w @ (problem.source / z)


def locate_support_change(
    problem: RdProblem,
    support_lo: SupportSet,
    r_lo: np.ndarray,
    letters: Sequence[int],
    beta_lo: float,
    beta_hi: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> tuple[float, np.ndarray, int] | None:
    """Find the beta in [beta_lo, beta_hi] where one of ``letters`` joins the support.

    The branch supported on ``support_lo`` is followed with warm-started BA on
    the reduced problem, and the largest growth factor among ``letters`` is
    driven to 1.  Returns (beta, marginal on the full alphabet, BA iterations)
    or None without a sign change.
    """
    reduced = reduce(problem, support_lo)
    state = {"r": np.asarray(r_lo, dtype=float), "it": 0}

    def branch(beta: float) -> np.ndarray:
        res = ba_fixed_point(reduced, state["r"], beta, tol=tol, max_iter=max_iter)
        state["it"] += res.iterations
        state["r"] = res.marginal
        return embed(res.marginal, support_lo)

    def g(beta: float) -> float:
        full = branch(beta)
        return float(np.max(growth_factors(problem, full, beta)[list(letters)]) - 1.0)

    g_lo, g_hi = g(beta_lo), g(beta_hi)
    if not (g_lo < 0 < g_hi):
        return None
    beta_star = brentq(g, beta_lo, beta_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return beta_star, branch(beta_star), state["it"]


@dataclass
class HandleResult:
    support: SupportSet
    problem: RdProblem
    fixed_point: FixedPointResult
    terminal: bool
    record: BifurcationRecord


def handle_bifurcation(
    problem: RdProblem,
    support: SupportSet,
    last: np.ndarray,
    beta: float,
    config: TrackConfig,
    beta_previous: float | None = None,
) -> HandleResult:
    """Zero every cluster at or below delta, renormalise and run BA at ``beta``.

    ``problem`` is the reduced problem the segment was tracked on and
    ``support`` its letters in the original alphabet.
    """
    last = np.asarray(last, dtype=float)
    keep = last > config.delta
    if not keep.any():
        keep = last == last.max()
    inner = SupportSet.from_mask(keep)
    new_support = support.compose(inner)
    reduced = reduce(problem, inner)
    start = last[keep] / last[keep].sum()
    res = ba_fixed_point(reduced, start, beta, config.ba_tol, config.ba_max_iter)
    if not res.converged:
        raise TrackingError(
            f"BA did not converge at beta={beta:.6g} after {res.iterations} iterations "
            f"(residual {res.residual:.3g})"
        )
    if np.any(res.marginal < 0):
        raise TrackingError("BA produced a negative marginal")
    report = None
    located_iters = 0
    dropped = [i for i in range(len(keep)) if not keep[i]]
    if config.locate and dropped:
        hi = beta_previous if beta_previous is not None else config.grid_beta(beta, -1)
        lo = max(config.grid_beta(beta, 2), 1e-12)
        found = locate_support_change(problem, inner, res.marginal, dropped, lo, hi, tol=1e-13)
        if found is not None:
            beta_star, r_star, located_iters = found
            q_star = encoder_from_marginal(problem, r_star, beta_star)
            report = classify_bifurcation(
                problem, q_star, last, beta_star, config.eig_threshold, config.delta
            )
    if report is None:
        q_now = encoder_from_marginal(problem, embed(res.marginal, inner), beta)
        report = classify_bifurcation(problem, q_now, last, beta, config.eig_threshold, config.delta)
    record = BifurcationRecord(beta, beta_previous, support, new_support, report, res.iterations, located_iters)
    terminal = len(new_support) <= 1 or beta <= 0
    return HandleResult(new_support, reduced, res, terminal, record)


def _constant_point(beta: float, r: np.ndarray, support: SupportSet, order: int, event: str,
                    report: BifurcationReport | None) -> GridPoint:
    coeffs = np.zeros((order + 1, len(support)))
    coeffs[0] = r
    return GridPoint(beta, np.asarray(r, dtype=float).copy(), support, coeffs, event, report)


def root_track(problem: RdProblem, config: TrackConfig) -> TrackTrace:
    """Reconstruct the solution curve from beta0 down to beta_min.

    BA is run once at beta0 from the uniform marginal and then only after
    each threshold crossing.  The refreshed fixed point opens the next
    segment (event ``ba-refresh``) and carries the bifurcation report.
    """
    check(problem)
    trace = TrackTrace(problem, config)
    started = time.perf_counter()
    m = problem.n_repro
    init = ba_fixed_point(problem, np.full(m, 1.0 / m), config.beta0, config.ba_tol, config.ba_max_iter)
    trace.ba_invocations += 1
    trace.ba_iterations += init.iterations
    if not init.converged:
        raise TrackingError(
            f"initial BA did not converge at beta0={config.beta0} "
            f"after {init.iterations} iterations (residual {init.residual:.3g})"
        )

    ba_time = time.perf_counter() - started
    support = SupportSet.full(m)
    current = problem
    r, beta = init.marginal, config.beta0
    pending: BifurcationReport | None = None
    beta_previous: float | None = None
    while True:
        if len(support) <= 1:
            trace.points.append(_constant_point(beta, r, support, config.order, EVENT_REFRESH, pending))
            break
        seg = track_to_bifurcation(current, r, beta, config, support, EVENT_REFRESH)
        if seg.points:
            seg.points[0].report = pending
            beta_previous = seg.points[-1].beta
        trace.points.extend(seg.points)
        if seg.stop == "beta_min":
            break
        if seg.stop == "singular":
            trace.warnings.append(f"singular Jacobian at beta={seg.last_beta:.6g}: {seg.error}")
            if np.min(seg.last_r) > config.delta:
                raise TrackingError(seg.error or "singular Jacobian")
        tick = time.perf_counter()
        handled = handle_bifurcation(current, support, seg.last_r, seg.last_beta, config, beta_previous)
        ba_time += time.perf_counter() - tick
        trace.ba_invocations += 1
        trace.ba_iterations += handled.fixed_point.iterations
        trace.locate_iterations += handled.record.locate_iterations
        trace.bifurcations.append(handled.record)
        pending = handled.record.report
        if pending is not None and pending.classification == SUPPORT_SWITCHING:
            trace.warnings.append(
                f"possible support switch near beta={pending.beta:.6g}; continuing on the current branch"
            )
        support, current = handled.support, handled.problem
        r, beta = handled.fixed_point.marginal, seg.last_beta
        if handled.terminal:
            trace.points.append(_constant_point(beta, r, support, config.order, EVENT_REFRESH, pending))
            break
    total = time.perf_counter() - started
    trace.timings = {"total": total, "ba_and_locate": ba_time, "taylor": total - ba_time}
    return trace


def extrapolate(trace: TrackTrace, beta: float) -> np.ndarray:
    """Marginal at ``beta`` from the trace, embedded in the full alphabet.

    Uses the expansion of the nearest grid point at or above ``beta``; if that
    gives a negative entry, the next grid point below is used instead.
    """
    betas = trace.betas
    if betas.size == 0:
        raise ValueError("empty trace")
    if beta > betas[0]:
        raise ValueError(f"beta={beta} lies above the start of the trace ({betas[0]})")
    idx = int(np.flatnonzero(betas >= beta)[-1])
    out = trace.points[idx].evaluate(beta)
    if np.any(out < 0) and idx + 1 < len(trace.points):
        out = trace.points[idx + 1].evaluate(beta)
    return out


def ba_reverse_anneal(
    problem: RdProblem,
    betas: Sequence[float],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    r0: np.ndarray | None = None,
) -> list[FixedPointResult]:
    """BA along a decreasing beta grid, each run warm-started from the previous fixed point."""
    betas = list(betas)
    if any(b2 >= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly decreasing")
    m = problem.n_repro
    r = np.full(m, 1.0 / m) if r0 is None else np.asarray(r0, dtype=float)
    out = []
    for b in betas:
        res = ba_fixed_point(problem, r, b, tol, max_iter)
        out.append(res)
        r = res.marginal
    return out


def ba_independent(
    problem: RdProblem, betas: Sequence[float], tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> list[FixedPointResult]:
    """BA from the uniform marginal at every beta."""
    m = problem.n_repro
    return [ba_fixed_point(problem, np.full(m, 1.0 / m), b, tol, max_iter) for b in betas]


def spectra(problem: RdProblem, q: np.ndarray, r: np.ndarray, beta: float, snap: float = 1e-7) -> dict:
    """Eigenvalue moduli of both Jacobians at a fixed point (marginal one on the support)."""
    enc = np.sort(np.abs(np.linalg.eigvals(jacobian_encoder(problem, q, beta))))
    keep = np.flatnonzero(r > snap)
    sub = reduce(problem, SupportSet(tuple(int(i) for i in keep), problem.n_repro))
    marg = np.sort(np.abs(np.linalg.eigvals(jacobian_marginal(sub, r[keep] / r[keep].sum(), beta))))
    return {"encoder": enc, "marginal": marg, "support": tuple(int(i) for i in keep)}


@dataclass
class SweepEvent:
    beta: float
    support_below: tuple[int, ...]
    support_above: tuple[int, ...]
    report: BifurcationReport
    marginal_eigs: np.ndarray

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "support_below": list(self.support_below),
            "support_above": list(self.support_above),
            "report": self.report.to_dict(),
            "marginal_eigenvalues": self.marginal_eigs.tolist(),
        }


def locate_sweep_events(
    problem: RdProblem,
    betas: Sequence[float],
    results: Sequence[FixedPointResult],
    eig_threshold: float = 1e-6,
    marginal_threshold: float = 0.01,
    snap: float = 1e-7,
) -> list[SweepEvent]:
    """Locate and classify every support change along a beta grid of BA fixed points.

    For each adjacent pair whose supports differ, the lower-beta branch is
    followed until a letter of the upper support becomes admissible.  At that
    beta the encoder Jacobian is evaluated on the lower branch, and the
    marginal entries are taken from the upper-support fixed point there.
    """
    order = np.argsort(betas)
    betas = [float(betas[i]) for i in order]
    results = [results[i] for i in order]
    m = problem.n_repro
    events = []
    for k in range(len(betas) - 1):
        lo_sup = tuple(int(i) for i in np.flatnonzero(results[k].marginal > snap))
        hi_sup = tuple(int(i) for i in np.flatnonzero(results[k + 1].marginal > snap))
        if lo_sup == hi_sup:
            continue
        letters = [j for j in hi_sup if j not in lo_sup]
        if not letters:
            continue
        s_lo = SupportSet(lo_sup, m)
        r_lo = results[k].marginal[list(lo_sup)]
        found = locate_support_change(problem, s_lo, r_lo / r_lo.sum(), letters, betas[k], betas[k + 1])
        if found is None:
            log.warning("no sign change between beta=%g and %g", betas[k], betas[k + 1])
            continue
        beta_star, r_star, _ = found
        q_star = encoder_from_marginal(problem, r_star, beta_star)
        s_hi = SupportSet(hi_sup, m)
        r_hi0 = results[k + 1].marginal[list(hi_sup)]
        hi_fp = ba_fixed_point(reduce(problem, s_hi), r_hi0 / r_hi0.sum(), beta_star, tol=1e-12, max_iter=20_000)
        r_hi = embed(hi_fp.marginal, s_hi)
        report = classify_bifurcation(
            problem, q_star, r_hi, beta_star, eig_threshold, marginal_threshold, support=hi_sup
        )
        marg = spectra(problem, q_star, r_star, beta_star)["marginal"]
        events.append(SweepEvent(beta_star, lo_sup, hi_sup, report, marg))
    return events
