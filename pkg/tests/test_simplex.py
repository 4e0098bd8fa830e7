import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from rmmht.oracles import vertex_lp
from rmmht.simplex import Infeasible, SolverStall, simplex


def _feasible_instance(rng, m, n):
    A = rng.integers(-2, 4, size=(m, n)).astype(float)
    x0 = rng.uniform(0, 2, n) * (rng.random(n) < 0.6)
    b = A @ x0
    c = rng.normal(size=n)
    # bounded: add a budget row sum(x) = sum(x0) + slack
    A = np.vstack([A, np.ones(n)])
    A = np.hstack([A, np.zeros((m + 1, 1))])
    A[-1, -1] = 1.0
    b = np.append(b, x0.sum() + 1.0)
    c = np.append(c, 0.0)
    return c, A, b


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(2, 7))
def test_matches_highs_on_random_bounded_lps(seed, m, n):
    rng = np.random.default_rng(seed)
    c, A, b = _feasible_instance(rng, m, n)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert ref.status == 0
    res = simplex(c, A, b)
    assert res.objective == pytest.approx(ref.fun, abs=1e-7)
    np.testing.assert_allclose(A @ res.x, b, atol=1e-7)
    assert res.x.min() >= -1e-9


def test_matches_vertex_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(40):
        c, A, b = _feasible_instance(rng, 2, 5)
        assert simplex(c, A, b).objective == pytest.approx(vertex_lp(A, b, c), abs=1e-7)


def test_textbook_example():
    # min -x1 - x2  s.t. x1 + 2 x2 + s1 = 4, 3 x1 + x2 + s2 = 6
    A = np.array([[1.0, 2, 1, 0], [3, 1, 0, 1]])
    res = simplex(np.array([-1.0, -1, 0, 0]), A, np.array([4.0, 6]))
    np.testing.assert_allclose(res.x[:2], [1.6, 1.2], atol=1e-12)
    assert res.objective == pytest.approx(-2.8)


def test_redundant_rows_are_tolerated():
    A = np.array([[1.0, 1, 0], [1, 1, 0], [0, 1, 1]])
    res = simplex(np.array([1.0, 2, 0]), A, np.array([1.0, 1, 1]))
    assert res.objective == pytest.approx(1.0)


def test_infeasible_raises():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(Infeasible):
        simplex(np.zeros(2), A, np.array([1.0, 2.0]))


def test_unbounded_raises():
    A = np.array([[1.0, -1.0]])
    with pytest.raises(RuntimeError):
        simplex(np.array([-1.0, 0.0]), A, np.array([0.0]))


def test_iteration_limit():
    rng = np.random.default_rng(0)
    c, A, b = _feasible_instance(rng, 4, 8)
    with pytest.raises(SolverStall):
        simplex(c, A, b, max_iter=0)


def test_deterministic():
    rng = np.random.default_rng(9)
    c, A, b = _feasible_instance(rng, 3, 6)
    r1, r2 = simplex(c, A, b), simplex(c, A, b)
    assert np.array_equal(r1.x, r2.x) and r1.iterations == r2.iterations
