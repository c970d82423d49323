"""Sparse integer polynomials in x0, x1, ... and the P_k family.

The P_k polynomials encode repeated beta-derivatives of the BA encoder.
Variable x0 stands for the distortion d(x, x̂) and x_j for the conditional
moment <d^j>(x).  They are generated from P0 = 1 by

    P_{k+1} = (x1 - x0) * P_k + D(P_k),

where D is the derivation with D(x0) = 0 and D(x_j) = x1*x_j - x_{j+1}.

An optional on-disk cache holds one polynomial per file, one monomial per
line written as ``coefficient var:exp var:exp ...``.  Set
``RDROOT_POLY_CACHE`` to a directory to enable it.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Mapping

Monomial = tuple[tuple[int, int], ...]  # sorted (variable, exponent) pairs, exponents > 0

CACHE_ENV = "RDROOT_POLY_CACHE"


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    exps = dict(a)
    for var, e in b:
        exps[var] = exps.get(var, 0) + e
    return tuple(sorted(exps.items()))


class SymbolicPolynomial:
    """Immutable sparse polynomial with integer coefficients."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Monomial, int] | None = None):
        clean: dict[Monomial, int] = {}
        for mono, coef in (terms or {}).items():
            mono = tuple(sorted((int(v), int(e)) for v, e in mono if e != 0))
            coef = int(coef)
            if coef:
                clean[mono] = clean.get(mono, 0) + coef
        self._terms = {m: c for m, c in clean.items() if c}

    @classmethod
    def constant(cls, c: int) -> "SymbolicPolynomial":
        return cls({(): c})

    @classmethod
    def var(cls, index: int) -> "SymbolicPolynomial":
        return cls({((index, 1),): 1})

    @property
    def terms(self) -> dict[Monomial, int]:
        return dict(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, int):
            other = SymbolicPolynomial.constant(other)
        if not isinstance(other, SymbolicPolynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def __add__(self, other: "SymbolicPolynomial | int") -> "SymbolicPolynomial":
        if isinstance(other, int):
            other = SymbolicPolynomial.constant(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0) + c
        return SymbolicPolynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "SymbolicPolynomial":
        return SymbolicPolynomial({m: -c for m, c in self._terms.items()})

    def __sub__(self, other: "SymbolicPolynomial | int") -> "SymbolicPolynomial":
        if isinstance(other, int):
            other = SymbolicPolynomial.constant(other)
        return self + (-other)

    def __rsub__(self, other: int) -> "SymbolicPolynomial":
        return SymbolicPolynomial.constant(other) - self

    def __mul__(self, other: "SymbolicPolynomial | int") -> "SymbolicPolynomial":
        if isinstance(other, int):
            return SymbolicPolynomial({m: c * other for m, c in self._terms.items()})
        out: dict[Monomial, int] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _mono_mul(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return SymbolicPolynomial(out)

    __rmul__ = __mul__

    def degree(self) -> int:
        if not self._terms:
            return -1
        return max(sum(e for _, e in m) for m in self._terms)

    def variables(self) -> set[int]:
        return {v for m in self._terms for v, _ in m}

    def derive(self) -> "SymbolicPolynomial":
        """Apply the derivation D(x0)=0, D(x_j)=x1*x_j - x_{j+1} via the Leibniz rule."""
        out: dict[Monomial, int] = {}
        for mono, coef in self._terms.items():
            exps = dict(mono)
            for var, e in mono:
                if var == 0:
                    continue
                # d/dx_var of the monomial, times D(x_var)
                rest = dict(exps)
                rest[var] -= 1
                scale = coef * e
                plus = dict(rest)
                plus[1] = plus.get(1, 0) + 1
                plus[var] = plus.get(var, 0) + 1
                minus = dict(rest)
                minus[var + 1] = minus.get(var + 1, 0) + 1
                for target, sign in ((plus, 1), (minus, -1)):
                    key = tuple(sorted((v, x) for v, x in target.items() if x))
                    out[key] = out.get(key, 0) + sign * scale
        return SymbolicPolynomial(out)

    def evaluate(self, values: Mapping[int, float] | list[float]) -> float:
        """Evaluate at the given variable values, summing monomials in sorted order."""
        total = 0.0
        for mono in sorted(self._terms):
            term = float(self._terms[mono])
            for var, e in mono:
                try:
                    term *= values[var] ** e
                except (KeyError, IndexError):
                    raise KeyError(f"no value supplied for x{var}") from None
            total += term
        return total

    def to_text(self) -> str:
        lines = []
        for mono in sorted(self._terms):
            pairs = " ".join(f"{v}:{e}" for v, e in mono)
            lines.append(f"{self._terms[mono]} {pairs}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SymbolicPolynomial":
        terms: dict[Monomial, int] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            coef, *pairs = line.split()
            mono = tuple(sorted((int(v), int(e)) for v, e in (p.split(":") for p in pairs)))
            terms[mono] = terms.get(mono, 0) + int(coef)
        return cls(terms)

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for mono in sorted(self._terms):
            body = "*".join(f"x{v}" if e == 1 else f"x{v}^{e}" for v, e in mono)
            parts.append(f"{self._terms[mono]}" + (f"*{body}" if body else ""))
        return " + ".join(parts)


def derive(p: SymbolicPolynomial) -> SymbolicPolynomial:
    return p.derive()


def evaluate(p: SymbolicPolynomial, values: Mapping[int, float] | list[float]) -> float:
    return p.evaluate(values)


_lock = threading.Lock()
_family: list[SymbolicPolynomial] = [SymbolicPolynomial.constant(1)]


def _cache_file(k: int) -> Path | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    return Path(root) / f"P{k}.txt"


def _load_or_build(k: int, prev: SymbolicPolynomial) -> SymbolicPolynomial:
    path = _cache_file(k)
    if path is not None and path.exists():
        return SymbolicPolynomial.from_text(path.read_text())
    step = SymbolicPolynomial.var(1) - SymbolicPolynomial.var(0)
    poly = step * prev + prev.derive()
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(poly.to_text())
        tmp.replace(path)
    return poly


def generate_P(k_max: int) -> list[SymbolicPolynomial]:
    """Return [P_0, ..., P_{k_max}], extending the process-wide cache as needed."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    with _lock:
        while len(_family) <= k_max:
            _family.append(_load_or_build(len(_family), _family[-1]))
        return _family[: k_max + 1]
