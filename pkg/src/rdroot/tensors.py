"""Derivative tensors of root operators F(x, beta).

A tensor provider evaluates, at a point (x, beta), the mixed partials

    D^{b+m}_{beta^b, x^m} F

as arrays of shape ``(T,) * (m + 1)``: the first axis is the output
coordinate and the remaining ``m`` axes are the (symmetric) state axes.

Two providers live here: :class:`RdTensorProvider` for F = Id - BA_beta in
marginal coordinates, and :class:`LineParabolaProvider` for a line crossing
a parabola, a two-dimensional system with known derivatives.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Protocol

import numpy as np

from . import combinatorics as cb
from .ba_core import encoder_from_marginal
from .problem import RdProblem
from .sympoly import generate_P


class PointTensors(Protocol):
    dim: int

    def tensor(self, b: int, m: int) -> np.ndarray:
        """D^{b+m}_{beta^b, x^m} F at the point, shape ``(dim,) * (m + 1)``."""
        ...


class TensorProvider(Protocol):
    dim: int

    def at(self, x: np.ndarray, beta: float) -> PointTensors:
        ...

    def residual(self, x: np.ndarray, beta: float) -> np.ndarray:
        """F(x, beta) itself."""
        ...


def fan_out(values: np.ndarray, canon: list[tuple[int, ...]], dim: int, m: int) -> np.ndarray:
    """Expand per-multi-index output vectors into a full symmetric tensor.

    ``values[c]`` is the output vector for the sorted index tuple ``canon[c]``.
    Every permutation of a canonical tuple receives the same vector.
    """
    if m == 0:
        return values[0].copy()
    pos = _fan_out_positions(tuple(canon), dim, m)
    full = values[pos]  # (dim**m, dim)
    return np.ascontiguousarray(full.T).reshape((dim,) * (m + 1))


@lru_cache(maxsize=256)
def _fan_out_positions(canon: tuple[tuple[int, ...], ...], dim: int, m: int) -> np.ndarray:
    """Row of ``canon`` holding each entry of the flattened (dim,)*m index grid."""
    base = m + 1
    weights = base ** np.arange(dim)
    canon_codes = np.array([np.dot(cb.index_counts(c, dim), weights) for c in canon])
    order = np.argsort(canon_codes)
    grid = np.indices((dim,) * m).reshape(m, -1)
    counts = np.stack([(grid == i).sum(axis=0) for i in range(dim)])
    codes = weights @ counts
    pos = order[np.searchsorted(canon_codes[order], codes)]
    pos.setflags(write=False)
    return pos


@lru_cache(maxsize=256)
def _canonical_alphas(dim: int, m: int) -> tuple[list[tuple[int, ...]], np.ndarray, np.ndarray]:
    """Canonical index tuples of order m, their multi-indices and alpha! values."""
    canon = cb.multi_indices(dim, m)
    alphas = np.array([cb.index_counts(c, dim) for c in canon], dtype=int)
    facts = np.array([float(cb.multi_factorial(a.tolist())) for a in alphas])
    alphas.setflags(write=False)
    facts.setflags(write=False)
    return canon, alphas, facts


def contract(tensor: np.ndarray, vectors: list[np.ndarray]) -> np.ndarray:
    """Apply a tensor to vectors along its trailing axes, leaving the output axis."""
    out = tensor
    for v in vectors:
        out = out @ v
    return out


class PointScratch:
    """Per-point quantities shared by all RD tensors at (r, beta).

    Holds the encoder, conditional distortion moments <d^k>(x), the matrices
    P_k[q; d](xhat, x) and the grid G(k, a) as arrays of shape (M, N).
    """

    def __init__(self, problem: RdProblem, r: np.ndarray, beta: float, k_max: int, a_max: int):
        self.problem = problem
        self.r = np.asarray(r, dtype=float)
        self.beta = float(beta)
        self.q = encoder_from_marginal(problem, self.r, beta)
        self.k_max = k_max
        self.a_max = a_max
        self.moments = expected_distortion_powers(self.q, problem.distortion, k_max)
        self.P = eval_P_matrices(self, k_max)
        self.G = eval_G(self, k_max, a_max)


def expected_distortion_powers(q: np.ndarray, d: np.ndarray, k_max: int) -> np.ndarray:
    """Rows k = 0..k_max of <d^k>(x) = sum_xhat q(xhat|x) d(x, xhat)^k (row 0 is all ones)."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.empty((k_max + 1, d.shape[0]))
    power = np.ones_like(d)
    for k in range(k_max + 1):
        out[k] = np.einsum("ax,xa->x", q, power)
        power = power * d
    return out


def eval_P_matrices(scratch: PointScratch, k_max: int) -> np.ndarray:
    """P_k[q; d](xhat, x) for k = 0..k_max, stacked into shape (k_max+1, M, N)."""
    polys = generate_P(k_max)
    d_t = scratch.problem.distortion.T  # (M, N)
    m, n = d_t.shape
    moments = scratch.moments
    out = np.empty((k_max + 1, m, n))
    for k, poly in enumerate(polys):
        acc = np.zeros((m, n))
        for mono, coef in sorted(poly.terms.items()):
            term = np.full((m, n), float(coef))
            for var, e in mono:
                term = term * (d_t**e if var == 0 else moments[var][None, :] ** e)
            acc += term
        out[k] = acc
    return out


def eval_G(scratch: PointScratch, k_max: int, a_max: int) -> np.ndarray:
    """The grid G(k, a) for 0 <= k <= k_max, 0 <= a <= a_max, shape (k_max+1, a_max+1, M, N).

    G(k, a) sums, over partitions t of k with at most a parts, the products
    prod_j (P_j / j!)^{t_j} / (t! (a - |t|)!).  Each partition is visited once
    and its product added to every admissible a.
    """
    P = scratch.P
    _, m, n = P.shape
    inv_fact = np.array([1.0 / math.factorial(a) for a in range(a_max + 1)])
    G = np.zeros((k_max + 1, a_max + 1, m, n))
    G[0] = inv_fact[:, None, None] * np.ones((m, n))
    for k in range(1, k_max + 1):
        for part in cb.partitions(k):
            size = part.total_multiplicity
            if size > a_max:
                continue
            term = np.ones((m, n))
            for j, t in zip(part.parts, part.multiplicities):
                term = term * (P[j] / math.factorial(j)) ** t / math.factorial(t)
            for a in range(size, a_max + 1):
                G[k, a] += term * inv_fact[a - size]
    return G


class RdPointTensors:
    """Derivative tensors of Id - BA_beta at one point, built from one scratch."""

    def __init__(self, scratch: PointScratch):
        self.scratch = scratch
        self.dim = scratch.r.shape[0]

    def tensor_beta_only(self, b: int) -> np.ndarray:
        """D^b_{beta^b}(Id - BA)[r] = -sum_x p(x) q(xhat|x) P_b(xhat, x)."""
        if b < 1:
            raise ValueError("beta order must be >= 1")
        s = self.scratch
        return -(s.q * s.P[b]) @ s.problem.source

    def tensor_mixed(self, b: int, alpha_plus: tuple[int, ...]) -> np.ndarray:
        """Partial derivative of every coordinate of Id - BA in beta^b and the multi-index alpha_plus."""
        alpha = np.asarray(alpha_plus, dtype=int)
        if alpha.shape != (self.dim,) or alpha.sum() == 0:
            raise ValueError("alpha_plus must be a non-zero multi-index over the reproduction letters")
        facts = np.array([float(cb.multi_factorial(alpha.tolist()))])
        return self._mixed_batch(b, alpha[None, :], facts)[0]

    def _mixed_batch(self, b: int, alphas: np.ndarray, alpha_facts: np.ndarray) -> np.ndarray:
        """Mixed partials for a batch of multi-indices of equal order, shape (K, M)."""
        s = self.scratch
        n_plus = int(alphas[0].sum())
        if np.any(alphas.sum(axis=1) != n_plus):
            raise ValueError("all multi-indices in a batch must have the same order")
        if np.any(s.r <= 0):
            raise ValueError("mixed tensors need a strictly positive marginal")
        if b > s.k_max or alphas.max() + 1 > s.a_max:
            raise ValueError("scratch grid too small for the requested order")
        p = s.problem.source
        q = s.q
        m_letters = self.dim
        sign_fact = (-1) ** (n_plus - 1) * math.factorial(n_plus - 1) * math.factorial(b)
        coef = float(sign_fact) * alpha_facts  # (K,)
        ratio = q / s.r[:, None]  # (M, N)
        base = p[None, :] * np.prod(ratio[None] ** alphas[:, :, None], axis=1)  # (K, N)

        ks = _compositions_array(b, m_letters)  # (C, M)
        letters = np.arange(m_letters)
        kk = ks[:, None, :]
        aa = alphas[None, :, :]
        A = s.G[kk, aa, letters, :]  # (C, K, M, N)
        A_up = s.G[kk, aa + 1, letters, :]
        # product over all letters except the output letter
        ones = np.ones_like(A[:, :, :1])
        prefix = np.cumprod(np.concatenate([ones, A[:, :, :-1]], axis=2), axis=2)
        suffix = np.cumprod(np.concatenate([ones, A[:, :, :0:-1]], axis=2), axis=2)[:, :, ::-1]
        excl = prefix * suffix
        H = aa[..., None] * A - n_plus * (1 + aa[..., None]) * q[None, None] * A_up
        S = np.sum(excl * H, axis=0)  # (K, M, N)
        values = -coef[:, None] * np.einsum("kmn,kn->km", S, base)
        if b == 0 and n_plus == 1:
            values = values + alphas.astype(float)
        return values

    def tensor(self, b: int, m: int) -> np.ndarray:
        if m == 0:
            return self.tensor_beta_only(b)
        canon, alphas, facts = _canonical_alphas(self.dim, m)
        return fan_out(self._mixed_batch(b, alphas, facts), canon, self.dim, m)


@lru_cache(maxsize=None)
def _compositions_array(total: int, slots: int) -> np.ndarray:
    out = np.array(list(cb.compositions(total, slots)), dtype=int)
    out.setflags(write=False)
    return out


class RdTensorProvider:
    """Tensor provider for F = Id - BA_beta in reproduction-marginal coordinates.

    ``max_order`` bounds b + m for the queries that will be made; the scratch
    grids are sized for it (plus one marginal order for derivative Jacobians).
    """

    def __init__(self, problem: RdProblem, max_order: int):
        self.problem = problem
        self.dim = problem.n_repro
        self.max_order = max_order

    def at(self, x: np.ndarray, beta: float) -> RdPointTensors:
        k_max = self.max_order
        scratch = PointScratch(self.problem, x, beta, k_max, k_max + 3)
        return RdPointTensors(scratch)

    def residual(self, x: np.ndarray, beta: float) -> np.ndarray:
        from .ba_core import ba_step

        return np.asarray(x, dtype=float) - ba_step(self.problem, x, beta)


class _LineParabolaPoint:
    def __init__(self, a: float, b: float, c: float, x: np.ndarray):
        self.dim = 2
        self._a, self._b, self._c = a, b, c
        self._x = x

    def tensor(self, b: int, m: int) -> np.ndarray:
        shape = (2,) * (m + 1)
        out = np.zeros(shape)
        if b == 0 and m == 1:
            out[:] = [[2 * self._b * self._x[0] + self._c, -1.0], [self._a, -1.0]]
        elif b == 1 and m == 0:
            out[:] = [0.0, 1.0]
        elif b == 0 and m == 2:
            out[0, 0, 0] = 2 * self._b
        return out


class LineParabolaProvider:
    """F(x, y; beta) = (-y + b x^2 + c x + d, -y + a x + beta)."""

    def __init__(self, a: float, b: float, c: float, d: float):
        if b == 0:
            raise ValueError("b must be non-zero")
        self.a, self.b, self.c, self.d = a, b, c, d
        self.dim = 2

    def at(self, x: np.ndarray, beta: float) -> _LineParabolaPoint:
        return _LineParabolaPoint(self.a, self.b, self.c, np.asarray(x, dtype=float))

    def residual(self, x: np.ndarray, beta: float) -> np.ndarray:
        u, y = x
        return np.array([-y + self.b * u**2 + self.c * u + self.d, -y + self.a * u + beta])


def line_parabola_provider(a: float, b: float, c: float, d: float) -> LineParabolaProvider:
    return LineParabolaProvider(a, b, c, d)
