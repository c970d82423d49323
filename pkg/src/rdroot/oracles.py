"""Closed-form ground truth used to check the numerical machinery.

* Binary source with Hamming distortion: the optimal reproduction marginal
  is known in closed form as a function of beta, so derivatives of every
  order are available exactly.
* A line crossing a parabola: a two-dimensional root-finding problem whose
  roots and bifurcation point are explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class BinaryHammingOracle:
    """Bernoulli(p) source, p < 1/2, with Hamming distortion.

    Letter 0 is the symbol of probability p, letter 1 the other one.
    """

    p: float

    def __post_init__(self) -> None:
        if not 0 < self.p < 0.5:
            raise ValueError("p must lie in (0, 1/2)")

    @property
    def beta_c(self) -> float:
        """Below this beta the solution collapses onto the more probable letter."""
        return math.log((1 - self.p) / self.p)

    def marginal(self, beta: float) -> np.ndarray:
        return binary_hamming_marginal(self.p, beta)

    def derivatives(self, beta: float, L: int) -> list[np.ndarray]:
        return binary_hamming_derivatives(self.p, beta, L)

    def rate(self, distortion: float) -> float:
        return binary_hamming_rd_curve(self.p, distortion)


def binary_hamming_marginal(p: float, beta: float) -> np.ndarray:
    """Optimal reproduction marginal (r(letter 0), r(letter 1)) at ``beta``."""
    if not 0 < p < 0.5:
        raise ValueError("p must lie in (0, 1/2)")
    if beta <= 0:
        raise ValueError("beta must be positive")
    if beta <= math.log((1 - p) / p):
        return np.array([0.0, 1.0])
    # (1 - p(1 + e^b)) / (1 - e^b) rewritten as p - (1 - 2p) / expm1(b)
    r0 = p - (1 - 2 * p) / math.expm1(beta)
    r0 = max(r0, 0.0)
    return np.array([r0, 1.0 - r0])


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


def _bose_derivative(beta: float, k: int) -> float:
    """k-th derivative of f(beta) = 1 / (e^beta - 1).

    Uses f^(k) = (-1)^k sum_{j=0}^{k} j! S(k+1, j+1) f^{j+1}, S the Stirling
    numbers of the second kind (the negative-order polylogarithm identity).
    """
    f = 1.0 / math.expm1(beta)
    total = 0.0
    for j in range(k + 1):
        total += math.factorial(j) * _stirling2(k + 1, j + 1) * f ** (j + 1)
    return (-1) ** k * total


def binary_hamming_derivatives(p: float, beta: float, L: int) -> list[np.ndarray]:
    """[d^k r / d beta^k for k = 0..L] in the region beta > beta_c."""
    if not 0 < p < 0.5:
        raise ValueError("p must lie in (0, 1/2)")
    if beta <= math.log((1 - p) / p):
        raise ValueError("derivatives are only defined strictly above beta_c")
    out = [binary_hamming_marginal(p, beta)]
    for k in range(1, L + 1):
        dk = -(1 - 2 * p) * _bose_derivative(beta, k)
        out.append(np.array([dk, -dk]))
    return out


def binary_entropy(x: float) -> float:
    """H(x) in nats with 0 log 0 = 0."""
    if x <= 0 or x >= 1:
        return 0.0
    return -x * math.log(x) - (1 - x) * math.log(1 - x)


def binary_hamming_rd_curve(p: float, distortion: float) -> float:
    """R(D) = H(p) - H(D) on [0, min(p, 1-p)] and 0 beyond, in nats."""
    if distortion < 0:
        raise ValueError("distortion must be non-negative")
    if distortion >= min(p, 1 - p):
        return 0.0
    return binary_entropy(p) - binary_entropy(distortion)


def binary_hamming_distortion(beta: float) -> float:
    """Distortion of the optimal solution at slope -beta (above beta_c): 1/(1+e^beta)."""
    return 1.0 / (1.0 + math.exp(beta))


@dataclass(frozen=True)
class LineParabolaSystem:
    """Roots of F(x, y; beta) = (-y + b x^2 + c x + d, -y + a x + beta)."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self) -> None:
        if self.b == 0:
            raise ValueError("b must be non-zero")

    def delta(self, x0: float) -> float:
        """2 b x0 + c - a; the Jacobian is singular where this vanishes."""
        return 2 * self.b * x0 + self.c - self.a

    @property
    def beta_c(self) -> float:
        """Tangency point where the two roots merge."""
        h = (self.a - self.c) / (2 * self.b)
        return self.d - self.b * h * h

    def discriminant(self, beta: float) -> float:
        h = (self.a - self.c) / (2 * self.b)
        return h * h + (beta - self.d) / self.b

    def derivatives(self, x0: float, L: int) -> list[np.ndarray]:
        """Closed-form d^k(x, y)/d beta^k, k = 1..L, at a root with first coordinate x0."""
        delta = self.delta(x0)
        out = [np.array([1.0, self.a + delta]) / delta]
        # x(beta) = h + s sqrt(D(beta)), D' = 1/b; then dx/dbeta = 1/delta and
        # d^k x = (-1)^{k-1} (2k-3)!! (2b)^{k-1} / delta^{2k-1} for k >= 2.
        for k in range(2, L + 1):
            dfact = 1
            for j in range(2 * k - 3, 0, -2):
                dfact *= j
            xk = (-1) ** (k - 1) * dfact * (2 * self.b) ** (k - 1) / delta ** (2 * k - 1)
            out.append(np.array([xk, self.a * xk]))
        return out


def line_parabola_exact(system: LineParabolaSystem, beta: float, branch: str = "upper") -> np.ndarray:
    """The root (x, y) on the chosen branch; raises past the bifurcation."""
    disc = system.discriminant(beta)
    if disc < 0:
        raise ValueError(f"no real root at beta={beta} (beta_c={system.beta_c})")
    if branch not in ("upper", "lower"):
        raise ValueError("branch must be 'upper' or 'lower'")
    h = (system.a - system.c) / (2 * system.b)
    sign = 1.0 if branch == "upper" else -1.0
    x = h + sign * math.sqrt(disc)
    return np.array([x, beta + system.a * x])
