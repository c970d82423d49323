import numpy as np
import pytest

from rdroot.ba_core import ba_fixed_point
from rdroot.problem import RdProblem


def random_problem(rng, n_source=3, n_repro=3, scale=1.0):
    """A random problem with a strictly positive source and distinct distortion columns."""
    p = rng.uniform(0.2, 1.0, n_source)
    p /= p.sum()
    d = rng.uniform(0.0, scale, (n_source, n_repro))
    return RdProblem(p, d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def central_difference(f, x, h):
    """Columns of the Jacobian of f at x by central differences."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def nested_difference(F, b, idx, r, beta, h):
    """Mixed partial by nested central differences: b times in beta, then along idx."""
    if b > 0:
        return (nested_difference(F, b - 1, idx, r, beta + h, h) - nested_difference(F, b - 1, idx, r, beta - h, h)) / (2 * h)
    if idx:
        e = np.zeros_like(r)
        e[idx[0]] = h
        return (nested_difference(F, 0, idx[1:], r + e, beta, h) - nested_difference(F, 0, idx[1:], r - e, beta, h)) / (2 * h)
    return F(r, beta)


def interior_point(seed=0, beta=1.0, floor=0.1):
    """A seeded random 3x3 problem and a fixed point with every entry above ``floor``."""
    rng = np.random.default_rng(seed)
    while True:
        prob = random_problem(rng, 3, 3, scale=3.0)
        r = ba_fixed_point(prob, np.full(3, 1 / 3), beta, tol=1e-14).marginal
        if r.min() > floor:
            return prob, r, beta


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def report(number, ok, detail):
        line = f"C{number} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
