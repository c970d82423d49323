"""Rate-distortion problem instances, validation, and support reduction."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12
NEAR_DEGENERATE_TOL = 1e-10


class TrivialProblemError(ValueError):
    """Raised when a reduction would leave no reproduction letters."""


@dataclass(frozen=True)
class RdProblem:
    """A finite rate-distortion problem.

    Attributes:
        source: p_X, a length-N probability vector.
        distortion: N x M matrix with ``distortion[x, xhat] = d(x, xhat)``.
        source_labels, repro_labels: optional letter names.
    """

    source: np.ndarray
    distortion: np.ndarray
    source_labels: tuple[str, ...] | None = None
    repro_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        src = np.array(self.source, dtype=float)
        dist = np.array(self.distortion, dtype=float)
        if src.ndim != 1 or dist.ndim != 2 or dist.shape[0] != src.shape[0]:
            raise ValueError(
                f"shape mismatch: source {src.shape}, distortion {dist.shape}"
            )
        src.setflags(write=False)
        dist.setflags(write=False)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "distortion", dist)

    @property
    def n_source(self) -> int:
        return self.distortion.shape[0]

    @property
    def n_repro(self) -> int:
        return self.distortion.shape[1]

    def to_json(self) -> dict:
        out: dict = {"source": self.source.tolist(), "distortion": self.distortion.tolist()}
        if self.source_labels or self.repro_labels:
            out["labels"] = {
                "source": list(self.source_labels or []),
                "reproduction": list(self.repro_labels or []),
            }
        return out

    @classmethod
    def from_json(cls, data: dict) -> "RdProblem":
        labels = data.get("labels") or {}
        src_labels = labels.get("source") or None
        rep_labels = labels.get("reproduction") or None
        return cls(
            np.asarray(data["source"], dtype=float),
            np.asarray(data["distortion"], dtype=float),
            tuple(src_labels) if src_labels else None,
            tuple(rep_labels) if rep_labels else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> "RdProblem":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(problem: RdProblem) -> ValidationReport:
    """Check probability, finiteness and non-degeneracy conditions."""
    report = ValidationReport()
    p, d = problem.source, problem.distortion
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        report.violations.append("source has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PROB_TOL:
        report.violations.append(f"source sums to {p.sum()!r}, not 1")
    if np.any(~np.isfinite(d)):
        report.violations.append("distortion has non-finite entries")
    if np.any(d < 0):
        report.violations.append("distortion has negative entries")
    m = problem.n_repro
    for i in range(m):
        for j in range(i + 1, m):
            gap = np.max(np.abs(d[:, i] - d[:, j])) if d.shape[0] else 0.0
            if gap == 0.0:
                report.violations.append(f"degenerate: distortion columns {i} and {j} are identical")
            elif gap < NEAR_DEGENERATE_TOL:
                report.warnings.append(f"distortion columns {i} and {j} differ by only {gap:.3g}")
    return report


def check(problem: RdProblem) -> RdProblem:
    """Validate, raising ValueError on violations and emitting warnings."""
    report = validate(problem)
    for w in report.warnings:
        warnings.warn(w, stacklevel=2)
    if not report.ok:
        raise ValueError("; ".join(report.violations))
    return problem


@dataclass(frozen=True)
class SupportSet:
    """Ordered subset of reproduction letters, as indices into the parent alphabet."""

    indices: tuple[int, ...]
    parent_size: int

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise TrivialProblemError("support set is empty")
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise ValueError("support indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.parent_size:
            raise ValueError("support index out of range")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, size: int) -> "SupportSet":
        return cls(tuple(range(size)), size)

    @classmethod
    def from_mask(cls, mask: Sequence[bool]) -> "SupportSet":
        return cls(tuple(int(i) for i in np.flatnonzero(mask)), len(mask))

    def __len__(self) -> int:
        return len(self.indices)

    def compose(self, inner: "SupportSet") -> "SupportSet":
        """Support of a further reduction, expressed in this set's parent alphabet."""
        if inner.parent_size != len(self):
            raise ValueError("inner support has the wrong parent size")
        return SupportSet(tuple(self.indices[i] for i in inner.indices), self.parent_size)

    def restrict(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector)
        if vector.shape[0] != self.parent_size:
            raise ValueError("vector length differs from the parent alphabet size")
        return vector[list(self.indices)]


def reduce(problem: RdProblem, support: SupportSet) -> RdProblem:
    """Delete reproduction letters outside ``support``, keeping column order."""
    if support.parent_size != problem.n_repro:
        raise ValueError("support does not match the problem's reproduction alphabet")
    cols = list(support.indices)
    labels = None
    if problem.repro_labels:
        labels = tuple(problem.repro_labels[i] for i in cols)
    return RdProblem(problem.source, problem.distortion[:, cols], problem.source_labels, labels)


def embed(marginal: np.ndarray, support: SupportSet, size: int | None = None) -> np.ndarray:
    """Extend a vector on ``support`` to the full alphabet, with zeros elsewhere."""
    marginal = np.asarray(marginal, dtype=float)
    size = support.parent_size if size is None else size
    if size != support.parent_size:
        raise ValueError("size differs from the support's parent alphabet")
    if marginal.shape[0] != len(support):
        raise ValueError(f"expected {len(support)} entries, got {marginal.shape[0]}")
    out = np.zeros(size)
    out[list(support.indices)] = marginal
    return out


def is_distribution(v: np.ndarray, tol: float = PROB_TOL) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(v >= 0) and abs(v.sum() - 1.0) <= tol)


# Built-in instances.

def hamming_problem(p: float) -> RdProblem:
    """Binary source with P(X=1) = p under Hamming distortion.

    Letter index 0 is the symbol with probability p, matching the oracle's
    convention that "letter 1" is the p-symbol.
    """
    return RdProblem(np.array([p, 1.0 - p]), np.array([[0.0, 1.0], [1.0, 0.0]]))


def fig3_problem() -> RdProblem:
    """4x4 problem with three cluster-vanishing bifurcations."""
    d = np.array([[0, 1, 1, 2], [4, 1, 5, 2], [4, 5, 1, 2], [8, 5, 5, 2]], dtype=float) / 8.0
    return RdProblem(np.array([0.4, 0.3, 0.2, 0.1]), d)


def berger_problem() -> RdProblem:
    """2x3 problem with a cluster-vanishing and a support-switching bifurcation."""
    return RdProblem(np.array([0.4, 0.6]), np.array([[1.0, 0.0, 0.3], [0.0, 1.0, 0.3]]))


def builtin(name: str) -> RdProblem:
    """Resolve ``fig3``, ``berger273`` or ``binary-hamming:p=<value>``."""
    if name == "fig3":
        return fig3_problem()
    if name == "berger273":
        return berger_problem()
    if name.startswith("binary-hamming"):
        p = 0.3
        if ":" in name:
            key, _, value = name.split(":", 1)[1].partition("=")
            if key.strip() != "p" or not value:
                raise ValueError(f"cannot parse built-in problem {name!r}")
            p = float(value)
        return hamming_problem(p)
    raise KeyError(f"unknown built-in problem {name!r}")
