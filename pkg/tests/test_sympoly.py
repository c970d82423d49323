import numpy as np
import pytest
import sympy as sp

from rdroot import sympoly
from rdroot.sympoly import SymbolicPolynomial as Poly

X = [Poly.var(i) for i in range(6)]


def test_derive_basic_variables():
    assert sympoly.derive(X[1]) == X[1] * X[1] - X[2]
    assert sympoly.derive(X[0]) == Poly()


def test_derive_product():
    expected = 2 * (X[1] * X[1] * X[2]) - X[2] * X[2] - X[1] * X[3]
    assert sympoly.derive(X[1] * X[2]) == expected


def test_first_polynomials():
    P = sympoly.generate_P(3)
    assert P[0] == Poly.constant(1)
    assert P[1] == X[1] - X[0]
    assert P[2] == X[0] * X[0] - 2 * X[0] * X[1] + 2 * X[1] * X[1] - X[2]
    x0, x1, x2, x3 = X[:4]
    p3 = -x0 * x0 * x0 + 3 * x0 * x0 * x1 + 3 * x0 * x2 - 6 * x0 * x1 * x1 + 6 * x1 * x1 * x1 - 6 * x1 * x2 + x3
    assert P[3] == p3


def test_evaluate_examples():
    P = sympoly.generate_P(2)
    assert sympoly.evaluate(P[1], {0: 2.0, 1: 5.0}) == 3.0
    assert sympoly.evaluate(P[2], [1.0, 1.0, 1.0]) == 0.0
    assert sympoly.evaluate(P[0], {}) == 1.0


def test_degree_and_size_bounds():
    import math

    P = sympoly.generate_P(20)
    for k, poly in enumerate(P):
        assert poly.degree() <= k
        assert len(poly) <= 2**k * math.factorial(k)


def test_derive_is_linear(rng):
    for _ in range(10):
        a, b = (int(v) for v in rng.integers(-5, 6, 2))
        p = Poly({((int(rng.integers(0, 3)), 1), (int(rng.integers(1, 4)), 2)): int(rng.integers(-4, 5))}) + X[2]
        q = X[1] * X[3] - 3 * X[0]
        assert sympoly.derive(a * p + b * q) == a * sympoly.derive(p) + b * sympoly.derive(q)


@pytest.mark.parametrize("k", range(1, 7))
def test_single_letter_collapse(k):
    d = 0.7
    values = [d] + [d**j for j in range(1, k + 1)]
    assert abs(sympoly.generate_P(k)[k].evaluate(values)) < 1e-12


def test_text_round_trip(tmp_path):
    P = sympoly.generate_P(6)
    for poly in P:
        assert Poly.from_text(poly.to_text()) == poly


def test_disk_cache(tmp_path, monkeypatch):
    monkeypatch.setenv(sympoly.CACHE_ENV, str(tmp_path))
    poly = sympoly._load_or_build(3, sympoly.generate_P(2)[2])
    assert (tmp_path / "P3.txt").exists()
    assert Poly.from_text((tmp_path / "P3.txt").read_text()) == poly == sympoly.generate_P(3)[3]


def test_polynomials_match_symbolic_beta_derivatives():
    """P_k(x0=d(x,xhat), xj=<d^j>(x)) equals (d^k/dbeta^k q) / q for the softmax encoder."""
    beta = sp.Symbol("beta")
    r = [sp.Rational(1, 5), sp.Rational(1, 2), sp.Rational(3, 10)]
    d = [sp.Rational(0), sp.Rational(3, 4), sp.Rational(2)]
    weights = [ri * sp.exp(-beta * di) for ri, di in zip(r, d)]
    z = sum(weights)
    q = [w / z for w in weights]
    b0 = sp.Rational(7, 10)
    qv = [float(v.subs(beta, b0)) for v in q]
    moments = [sum(qi * float(di) ** j for qi, di in zip(qv, d)) for j in range(6)]
    P = sympoly.generate_P(5)
    for k in range(1, 6):
        for i in range(3):
            exact = float((sp.diff(q[i], beta, k) / q[i]).subs(beta, b0))
            values = [float(d[i])] + moments[1:]
            assert np.isclose(P[k].evaluate(values), exact, rtol=1e-12, atol=1e-12)
