"""Implicit derivatives d^l x / d beta^l of a root of F(x, beta) = 0.

Differentiating F(x(beta), beta) = 0 l times and grouping terms by integer
partitions of l gives

    D_x F [d^l x] = - sum over non-trivial partitions (m1)p1 + ... + (ms)ps of l
                      sum_{b=0}^{m1 [p1 == 1]} c(l, b, partition)
                      D^m_{beta^b, x^{m-b}} F [(d^{p1} x) x (m1-b), (d^{p2} x) x m2, ...]

with c from :func:`combinatorics.taylor_coefficient` and m = m1 + ... + ms.
The trivial partition (l = l, b = 0) is the left-hand side.  Derivatives are
built bottom-up, with tensors cached by (b, m) and one LU factorisation of
D_x F reused for every order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import combinatorics as cb
from .tensors import PointTensors, TensorProvider, contract

RCOND_MIN = 1e-12


class SingularJacobianError(np.linalg.LinAlgError):
    """D_x F is numerically singular at the requested point.

    Solutions of the linear systems are then only determined up to an element
    of the kernel; ``null_dim`` estimates its dimension.
    """

    def __init__(self, rcond: float, null_dim: int, beta: float | None = None):
        self.rcond = rcond
        self.null_dim = null_dim
        self.beta = beta
        where = "" if beta is None else f" at beta={beta:.6g}"
        super().__init__(
            f"singular Jacobian{where}: rcond={rcond:.3g}, null space dimension ~{null_dim}"
        )


@dataclass
class Term:
    """One summand of the right-hand side for a given order."""

    coefficient: float
    b: int
    x_order: int
    orders: tuple[int, ...]  # derivative orders of the vectors fed to the tensor


def rhs_terms(l: int) -> list[Term]:
    """All summands of the order-``l`` right-hand side, trivial term excluded."""
    terms = []
    for part in cb.partitions(l):
        m = part.total_multiplicity
        for b in range(part.ones + 1):
            if m == 1 and b == 0:
                continue  # the trivial partition: D_x F [d^l x] itself
            orders: list[int] = []
            for p, mult in zip(part.parts, part.multiplicities):
                count = mult - b if p == 1 else mult
                orders.extend([p] * count)
            terms.append(Term(cb.taylor_coefficient(l, b, part), b, m - b, tuple(orders)))
    return terms


class TensorCache:
    """Memoises tensors of one point by (b, m) and logs which were requested."""

    def __init__(self, point: PointTensors):
        self.point = point
        self._store: dict[tuple[int, int], np.ndarray] = {}
        self.calls: list[tuple[int, int]] = []

    def __call__(self, b: int, m: int) -> np.ndarray:
        self.calls.append((b, m))
        key = (b, m)
        if key not in self._store:
            self._store[key] = self.point.tensor(b, m)
        return self._store[key]

    @property
    def keys(self) -> set[tuple[int, int]]:
        return set(self._store)


@dataclass
class ImplicitDerivSet:
    """Derivatives of orders 1..L at a root, with what is needed to extend them."""

    x: np.ndarray
    beta: float
    derivs: list[np.ndarray]
    rcond: float
    residuals: list[float]
    summand_counts: list[int]
    cache: TensorCache = field(repr=False)
    lu: tuple = field(repr=False)
    jacobians: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def order(self) -> int:
        return len(self.derivs)

    def deriv(self, k: int) -> np.ndarray:
        """d^k x / d beta^k, with k = 0 giving the base point."""
        return self.x if k == 0 else self.derivs[k - 1]


def _factor(jac: np.ndarray, beta: float) -> tuple[tuple, float]:
    anorm = np.linalg.norm(jac, 1)
    with warnings.catch_warnings():
        # exact singularity is detected through the condition estimate below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(jac, check_finite=True)
    if anorm == 0:
        rcond = 0.0
    else:
        rcond, info = sla.lapack.dgecon(lu[0], anorm, norm="1")
        if info != 0:
            rcond = 0.0
    if not np.isfinite(rcond) or rcond < RCOND_MIN:
        rank = np.linalg.matrix_rank(jac)
        raise SingularJacobianError(float(rcond), max(1, jac.shape[0] - rank), beta)
    return lu, float(rcond)


def _apply(cache: TensorCache, term: Term, vec_of) -> np.ndarray:
    return contract(cache(term.b, term.x_order), [vec_of(k) for k in term.orders])


def implicit_derivatives(
    provider: TensorProvider,
    x: np.ndarray,
    beta: float,
    L: int,
    point: PointTensors | None = None,
) -> ImplicitDerivSet:
    """Compute d^k x / d beta^k for k = 1..L at a root (x, beta) of F."""
    if L < 1:
        raise ValueError("order L must be >= 1")
    x = np.asarray(x, dtype=float)
    if x.shape != (provider.dim,):
        raise ValueError(f"state has shape {x.shape}, provider dimension is {provider.dim}")
    cache = TensorCache(point if point is not None else provider.at(x, beta))
    jac = cache(0, 1)
    lu, rcond = _factor(jac, beta)
    derivs: list[np.ndarray] = []
    residuals: list[float] = []
    counts: list[int] = []

    def vec_of(k: int) -> np.ndarray:
        return derivs[k - 1]

    for l in range(1, L + 1):
        terms = rhs_terms(l)
        rhs = np.zeros(provider.dim)
        for term in terms:
            rhs += term.coefficient * _apply(cache, term, vec_of)
        sol = -sla.lu_solve(lu, rhs)
        scale = max(np.max(np.abs(rhs)), np.finfo(float).tiny)
        residuals.append(float(np.max(np.abs(jac @ sol + rhs)) / scale))
        counts.append(len(terms))
        derivs.append(sol)
    return ImplicitDerivSet(x, float(beta), derivs, rcond, residuals, counts, cache, lu)


def derivative_jacobian(derivset: ImplicitDerivSet, l: int) -> np.ndarray:
    """D_x (d^l x / d beta^l), the Jacobian of the order-l derivative in the state.

    Lower-order Jacobians are computed first and memoised on ``derivset``.
    Requires tensors with one more state axis than the derivatives themselves.
    """
    if not 1 <= l <= derivset.order:
        raise ValueError(f"order {l} not available (have 1..{derivset.order})")
    cache = derivset.cache
    for k in range(1, l + 1):
        if k in derivset.jacobians:
            continue
        dim = derivset.x.shape[0]
        acc = contract(cache(0, 2), [derivset.deriv(k)])  # D^2_xx F [., d^k x]
        for term in rhs_terms(k):
            vecs = [derivset.deriv(o) for o in term.orders]
            # derivative of the tensor itself in x: one more open state axis
            acc = acc + term.coefficient * contract(cache(term.b, term.x_order + 1), vecs)
            # product rule over the vector slots
            if term.orders:
                base = cache(term.b, term.x_order)
                for slot in range(len(vecs)):
                    others = vecs[:slot] + vecs[slot + 1 :]
                    partial = contract(base, others)  # (dim, dim): output x open slot
                    acc = acc + term.coefficient * partial @ derivset.jacobians[term.orders[slot]]
        assert acc.shape == (dim, dim)
        derivset.jacobians[k] = -sla.lu_solve(derivset.lu, acc)
    return derivset.jacobians[l]


class TaylorPolynomial:
    """sum_k coeffs[k] * dbeta^k, with coeffs[k] = d^k x / k!."""

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = np.asarray(coeffs, dtype=float)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, dbeta: float) -> np.ndarray:
        out = self.coeffs[-1].copy()
        for c in self.coeffs[-2::-1]:
            out = out * dbeta + c
        return out


def taylor_polynomial(derivset: ImplicitDerivSet, base_value: np.ndarray | None = None, L: int | None = None) -> TaylorPolynomial:
    """Order-L Taylor polynomial around the derivative set's point."""
    L = derivset.order if L is None else L
    base = derivset.x if base_value is None else np.asarray(base_value, dtype=float)
    coeffs = [base] + [derivset.deriv(k) / math.factorial(k) for k in range(1, L + 1)]
    return TaylorPolynomial(np.array(coeffs))


def lipschitz_estimate(derivset: ImplicitDerivSet, L: int, dbeta: float) -> float:
    """Infinity norm of D_x T_L, where T_L = sum_k dbeta^{k-1}/k! d^k x."""
    total = np.zeros((derivset.x.shape[0],) * 2)
    for k in range(1, L + 1):
        total = total + dbeta ** (k - 1) / math.factorial(k) * derivative_jacobian(derivset, k)
    return float(np.max(np.sum(np.abs(total), axis=1)))
