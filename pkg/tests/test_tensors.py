import itertools
import math

import numpy as np
import pytest

from rdroot import combinatorics as cb
from rdroot.ba_core import ba_step, encoder_from_marginal, jacobian_marginal
from rdroot.problem import RdProblem, fig3_problem, hamming_problem
from rdroot.tensors import (
    PointScratch,
    RdPointTensors,
    RdTensorProvider,
    contract,
    eval_G,
    eval_P_matrices,
    expected_distortion_powers,
    fan_out,
    line_parabola_provider,
)

from conftest import interior_point, nested_difference, random_problem


def test_expected_distortion_powers():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    q = np.full((2, 2), 0.5)
    mom = expected_distortion_powers(q, d, 4)
    np.testing.assert_allclose(mom[0], 1.0)
    np.testing.assert_allclose(mom[1:], 0.5)
    single = expected_distortion_powers(np.ones((1, 2)), np.array([[0.3], [0.6]]), 3)
    np.testing.assert_allclose(single[2], [0.09, 0.36])


def test_P_matrices_hamming_uniform():
    prob = hamming_problem(0.5)
    s = PointScratch(prob, np.array([0.5, 0.5]), 0.0, 3, 4)
    np.testing.assert_allclose(s.P[0], 1.0)
    # P_1 = <d> - d(x, xhat)
    np.testing.assert_allclose(s.P[1], [[0.5, -0.5], [-0.5, 0.5]])


def test_P_matrices_vanish_for_single_letter():
    prob = RdProblem([0.3, 0.7], [[0.2], [0.5]])
    s = PointScratch(prob, np.ones(1), 1.0, 5, 6)
    np.testing.assert_allclose(s.P[1:], 0.0, atol=1e-14)


def test_G_grid_basics():
    prob, r, beta = interior_point()
    s = PointScratch(prob, r, beta, 4, 5)
    for a in range(6):
        np.testing.assert_allclose(s.G[0, a], 1.0 / math.factorial(a))
    np.testing.assert_array_equal(s.G[1:, 0], 0.0)
    np.testing.assert_allclose(s.G[1, 1], s.P[1])
    np.testing.assert_array_equal(eval_G(s, 4, 5), s.G)
    np.testing.assert_array_equal(eval_P_matrices(s, 4), s.P)


def test_beta_only_single_letter_is_zero():
    prob = RdProblem([0.3, 0.7], [[0.2], [0.5]])
    pt = RdTensorProvider(prob, 4).at(np.ones(1), 1.0)
    for b in range(1, 5):
        np.testing.assert_allclose(pt.tensor_beta_only(b), 0.0, atol=1e-14)


def test_beta_derivative_sums_to_zero(rng):
    prob = random_problem(rng, 4, 3)
    pt = RdTensorProvider(prob, 3).at(rng.dirichlet(np.ones(3)), 2.0)
    for b in range(1, 4):
        assert abs(pt.tensor_beta_only(b).sum()) < 1e-13


def test_beta_derivative_hamming_finite_difference():
    p, beta = 0.3, math.log(9)
    prob = hamming_problem(p)
    r = np.array([0.25, 0.75])
    h = 1e-5
    fd = -(ba_step(prob, r, beta + h) - ba_step(prob, r, beta - h)) / (2 * h)
    got = RdTensorProvider(prob, 1).at(r, beta).tensor(1, 0)
    np.testing.assert_allclose(got, fd, atol=1e-6)


def test_first_order_mixed_matches_jacobian(rng):
    prob = random_problem(rng, 3, 3)
    r = rng.dirichlet(np.ones(3) * 2)
    pt = RdTensorProvider(prob, 2).at(r, 1.5)
    np.testing.assert_allclose(pt.tensor(0, 1), jacobian_marginal(prob, r, 1.5), atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_tensors_match_finite_differences(seed):
    """Relative error in the max norm of each tensor."""
    prob, r, beta = interior_point(seed)
    F = lambda v, bb: v - ba_step(prob, v, bb)
    pt = RdTensorProvider(prob, 3).at(r, beta)
    h = 1e-4
    for b in range(4):
        for m in range(4 - b):
            if b + m == 0:
                continue
            T = pt.tensor(b, m)
            err = 0.0
            for idx in itertools.product(range(3), repeat=m):
                ref = nested_difference(F, b, list(idx), r, beta, h)
                err = max(err, np.max(np.abs(ref - T[(slice(None),) + idx])))
            assert err / np.max(np.abs(T)) < 1e-3, (b, m)


def test_order_two_tensor_finite_difference_tight():
    prob, r, beta = interior_point(seed=3)
    F = lambda v, bb: v - ba_step(prob, v, bb)
    T = RdTensorProvider(prob, 2).at(r, beta).tensor(0, 2)
    for idx in itertools.product(range(3), repeat=2):
        ref = nested_difference(F, 0, list(idx), r, beta, 1e-4)
        np.testing.assert_allclose(T[(slice(None),) + idx], ref, atol=1e-4)


def test_tensor_symmetry():
    prob, r, beta = interior_point()
    T = RdTensorProvider(prob, 4).at(r, beta).tensor(1, 3)
    for perm in itertools.permutations(range(1, 4)):
        assert np.array_equal(T, np.transpose(T, (0,) + perm))


def test_scratch_reuse_is_bit_identical():
    prob, r, beta = interior_point()
    shared = RdTensorProvider(prob, 4).at(r, beta)
    for b in range(5):
        for m in range(5 - b):
            if b + m == 0:
                continue
            fresh = RdTensorProvider(prob, 4).at(r, beta)
            assert np.array_equal(shared.tensor(b, m), fresh.tensor(b, m))


def test_single_entry_matches_batch():
    prob, r, beta = interior_point()
    pt = RdTensorProvider(prob, 3).at(r, beta)
    T = pt.tensor(1, 2)
    np.testing.assert_array_equal(pt.tensor_mixed(1, (1, 0, 1)), T[:, 0, 2])


def test_mixed_tensor_requires_positive_marginal():
    prob = fig3_problem()
    pt = RdTensorProvider(prob, 2).at(np.array([0.5, 0.5, 0.0, 0.0]), 2.0)
    with pytest.raises(ValueError):
        pt.tensor(0, 1)


def mixed_bound(b, m, d_max, M, delta):
    """Loose entry bound on the delta-interior, built from the P_k monomial count."""
    d_max = max(d_max, 1.0)
    inner = math.factorial(m) * cb.partition_count(b) * (2**b * math.factorial(b) * d_max ** (b * b)) ** (1 + m)
    return 1 + 2 * math.factorial(m + 1) * max(b, 1) / delta**m * math.comb(b + M - 1, b) * inner**M


def test_uniform_bound_on_interior(rng):
    delta = 0.1
    for prob in (fig3_problem(), hamming_problem(0.3)):
        M = prob.n_repro
        for _ in range(5):
            r = delta + (1 - M * delta) * rng.dirichlet(np.ones(M))
            beta = float(rng.uniform(0.5, 10))
            pt = RdTensorProvider(prob, 3).at(r, beta)
            for b in range(4):
                for m in range(4 - b):
                    if b + m == 0:
                        continue
                    bound = mixed_bound(b, m, prob.distortion.max(), M, delta)
                    assert np.max(np.abs(pt.tensor(b, m))) <= bound


def test_fan_out_and_contract():
    canon = cb.multi_indices(2, 2)
    values = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    T = fan_out(values, canon, 2, 2)
    np.testing.assert_array_equal(T[:, 0, 1], [3.0, 4.0])
    np.testing.assert_array_equal(T[:, 1, 0], [3.0, 4.0])
    v = np.array([1.0, 2.0])
    np.testing.assert_allclose(contract(T, [v, v]), np.einsum("oij,i,j->o", T, v, v))


def test_line_parabola_tensors():
    a, b, c, d = 1.0, 1.0, 0.0, 3.0
    prov = line_parabola_provider(a, b, c, d)
    x0 = 1.5
    pt = prov.at(np.array([x0, x0 + 3.0]), 3.0)
    np.testing.assert_array_equal(pt.tensor(0, 1), [[2 * b * x0 + c, -1.0], [a, -1.0]])
    np.testing.assert_array_equal(pt.tensor(1, 0), [0.0, 1.0])
    for bb, m in [(0, 3), (1, 2), (2, 1), (3, 0), (1, 1), (2, 0)]:
        assert not np.any(pt.tensor(bb, m))


def test_provider_residual_vanishes_at_fixed_point():
    prob, r, beta = interior_point()
    assert np.max(np.abs(RdTensorProvider(prob, 1).residual(r, beta))) < 1e-13
    assert isinstance(RdTensorProvider(prob, 1).at(r, beta), RdPointTensors)
    assert encoder_from_marginal(prob, r, beta).shape == (3, 3)
