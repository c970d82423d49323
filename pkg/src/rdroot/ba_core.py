"""The Blahut-Arimoto operator on reproduction marginals, its fixed points and Jacobians.

Conventions: marginals ``r`` have length M, encoders ``q`` are M x N arrays with
``q[xhat, x] = q(xhat | x)`` so that each column is a distribution, and
``problem.distortion[x, xhat]`` is d(x, xhat).  Information is in nats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import RdProblem

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1_000_000


@dataclass
class FixedPointResult:
    marginal: np.ndarray
    encoder: np.ndarray
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class CurvePoint:
    distortion: float
    rate: float
    beta: float | None = None

    @property
    def rate_bits(self) -> float:
        return self.rate / np.log(2.0)


def _weights(problem: RdProblem, beta: float) -> np.ndarray:
    """exp(-beta * (d - min_xhat d)) as an M x N array.

    Subtracting the row minimum factors a common term out of the partition
    function, which keeps at least one weight equal to 1 per source letter.
    """
    d = problem.distortion
    shifted = d - d.min(axis=1, keepdims=True)
    return np.exp(-beta * shifted).T


def encoder_from_marginal(problem: RdProblem, r: np.ndarray, beta: float) -> np.ndarray:
    """q(xhat|x) = r(xhat) exp(-beta d(x,xhat)) / Z(x, beta)."""
    r = np.asarray(r, dtype=float)
    if r.shape != (problem.n_repro,):
        raise ValueError(f"marginal has shape {r.shape}, expected ({problem.n_repro},)")
    if not np.any(r > 0):
        raise ValueError("marginal has no positive entry")
    unnorm = r[:, None] * _weights(problem, beta)
    z = unnorm.sum(axis=0)
    if np.any(z <= 0):
        # Every letter in the support is exponentially penalised for some x;
        # fall back to the unshifted log-domain computation.
        with np.errstate(divide="ignore"):
            logits = np.log(r)[:, None] - beta * problem.distortion.T
        logits -= logits.max(axis=0, keepdims=True)
        unnorm = np.exp(logits)
        z = unnorm.sum(axis=0)
    return unnorm / z


def marginal_from_encoder(problem: RdProblem, q: np.ndarray) -> np.ndarray:
    """s(xhat) = sum_x p(x) q(xhat|x)."""
    return np.asarray(q) @ problem.source


def ba_step(problem: RdProblem, r: np.ndarray, beta: float) -> np.ndarray:
    """One application of the Blahut-Arimoto operator to a marginal."""
    return marginal_from_encoder(problem, encoder_from_marginal(problem, r, beta))


def ba_fixed_point(
    problem: RdProblem,
    r0: np.ndarray,
    beta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FixedPointResult:
    """Iterate BA from ``r0`` until successive marginals are ``tol``-close in L-infinity."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = np.asarray(r0, dtype=float).copy()
    weights = _weights(problem, beta)
    p = problem.source
    residual = np.inf
    it = 0
    while it < max_iter:
        z = r @ weights
        if np.any(z <= 0):
            r_next = ba_step(problem, r, beta)
        else:
            r_next = r * (weights @ (p / z))
        it += 1
        residual = float(np.max(np.abs(r_next - r)))
        r = r_next
        if residual <= tol:
            break
    q = encoder_from_marginal(problem, r, beta)
    return FixedPointResult(r, q, it, residual, residual <= tol)


def rd_functionals(problem: RdProblem, q: np.ndarray) -> CurvePoint:
    """Expected distortion and mutual information (nats) of an encoder."""
    q = np.asarray(q, dtype=float)
    p = problem.source
    joint = q * p[None, :]  # M x N
    dist = float(np.sum(joint * problem.distortion.T))
    s = joint.sum(axis=1)
    mask = joint > 0
    ratio = np.ones_like(q)
    ratio[mask] = q[mask] / np.broadcast_to(s[:, None], q.shape)[mask]
    rate = float(np.sum(joint[mask] * np.log(ratio[mask])))
    return CurvePoint(dist, max(rate, 0.0))


def lagrangian(problem: RdProblem, q: np.ndarray, beta: float) -> float:
    point = rd_functionals(problem, q)
    return point.rate + beta * point.distortion


def jacobian_marginal(problem: RdProblem, r: np.ndarray, beta: float) -> np.ndarray:
    """M x M Jacobian of Id - BA_beta in marginal coordinates.

    Entry (i, j) is sum_x p(x) q(i|x) q(j|x) / r(j), plus (r(j) - BA[r](j)) / r(j)
    on the diagonal.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("marginal Jacobian needs a strictly positive marginal; reduce first")
    q = encoder_from_marginal(problem, r, beta)
    s = q @ problem.source
    a = (q * problem.source[None, :]) @ q.T / r[None, :]
    return a + np.diag((r - s) / r)


def jacobian_encoder(problem: RdProblem, q: np.ndarray, beta: float) -> np.ndarray:
    """MN x MN Jacobian of Id - BA_beta in encoder coordinates.

    BA acts on encoders by q -> s = marginal(q) -> encoder(s).  Rows and columns
    are flattened x̂-major: pair (xhat, x) sits at ``xhat * N + x``.
    """
    q = np.asarray(q, dtype=float)
    m, n = q.shape
    p = problem.source
    s = q @ p
    # The per-x shift in the weights cancels between numerator and z.
    weights = _weights(problem, beta)
    z = s @ weights
    new_q = s[:, None] * weights / z[None, :]
    # d new_q(xhat|x) / d s(xhat') = w(xhat',x)/z(x) * [delta - new_q(xhat|x)]
    ds = weights[None, :, :] / z[None, None, :] * (
        np.eye(m)[:, :, None] - new_q[:, None, :]
    )  # indices (xhat, xhat', x)
    # d s(xhat') / d q(xhat', x') = p(x')
    jac_ba = np.einsum("abx,y->axby", ds, p).reshape(m * n, m * n)
    return np.eye(m * n) - jac_ba


def jacobian_encoder_ba(problem: RdProblem, q: np.ndarray, beta: float) -> np.ndarray:
    """Jacobian of BA itself (not Id - BA) in encoder coordinates."""
    m, n = np.shape(q)
    return np.eye(m * n) - jacobian_encoder(problem, q, beta)


def blockwise_trace(jac_enc: np.ndarray, m: int, n: int) -> np.ndarray:
    """Sum the (xhat, x), (xhat', x) entries over x to get an M x M matrix."""
    blocks = jac_enc.reshape(m, n, m, n)
    return np.einsum("axbx->ab", blocks)


def min_abs_eigenvalue(mat: np.ndarray) -> float:
    """Smallest eigenvalue modulus of a dense real matrix."""
    return float(np.min(np.abs(np.linalg.eigvals(mat))))
