import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roadplan import lpsolve


def _make_lp(c, E, rhs, lower, upper):
    return lpsolve.BoxedLp(c=np.asarray(c, float), E=np.asarray(E, float),
                           rhs=np.asarray(rhs, float),
                           lower=np.asarray(lower, float),
                           upper=np.asarray(upper, float))


def vertex_enumeration_optimum(lp: lpsolve.BoxedLp):
    """Brute-force oracle: enumerate basic feasible points of the box-plus-
    equality polytope (m variables solved from the equalities, the rest at
    bounds)."""
    n, m = lp.n, lp.m
    best = None
    if m == 0:
        w = np.where(lp.c >= 0, lp.lower, lp.upper)
        return float(lp.c @ w)
    for basis in itertools.combinations(range(n), m):
        nonbasic = [j for j in range(n) if j not in basis]
        B = lp.E[:, basis]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        for corner in itertools.product(*[(lp.lower[j], lp.upper[j])
                                          for j in nonbasic]):
            w = np.zeros(n)
            w[nonbasic] = corner
            w[list(basis)] = np.linalg.solve(B, lp.rhs - lp.E[:, nonbasic] @ w[nonbasic])
            if np.all(w >= lp.lower - 1e-9) and np.all(w <= lp.upper + 1e-9):
                val = float(lp.c @ w)
                if best is None or val < best:
                    best = val
    return best


def test_single_variable():
    r = lpsolve.solve(_make_lp([-1.0], np.zeros((0, 1)), [], [0.0], [1.0]))
    assert r.status is lpsolve.LpStatus.OPTIMAL
    assert r.value == -1.0 and r.w[0] == 1.0


def test_zero_vector_always_feasible_in_certificate_form():
    # the collision LPs have rhs = 0, bounds [0, 1]: w = 0 is feasible, so
    # the optimum can never be positive
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = int(rng.integers(3, 9))
        E = rng.normal(size=(2, q))
        c = rng.normal(size=q)
        r = lpsolve.solve(_make_lp(c, E.T[:2] if False else E, np.zeros(2),
                                   np.zeros(q), np.ones(q)))
        assert r.status is lpsolve.LpStatus.OPTIMAL
        assert r.value <= 1e-12


def test_matches_vertex_enumeration_oracle():
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(0, min(3, n)))
        lower = rng.normal(size=n) - 1.0
        upper = lower + rng.uniform(0.2, 2.0, size=n)
        E = rng.normal(size=(m, n))
        x0 = lower + rng.uniform(0, 1, size=n) * (upper - lower)
        rhs = E @ x0 if m else np.zeros(0)
        lp = _make_lp(rng.normal(size=n), E, rhs, lower, upper)
        mine = lpsolve.solve(lp)
        ref = vertex_enumeration_optimum(lp)
        assert mine.status is lpsolve.LpStatus.OPTIMAL
        assert ref is not None
        assert abs(mine.value - ref) < 1e-8 * (1 + abs(ref))
        checked += 1
    assert checked == 200


def test_infeasible_detected():
    lp = _make_lp([1.0, 1.0], [[1.0, 1.0]], [5.0], [0.0, 0.0], [1.0, 1.0])
    assert lpsolve.solve(lp).status is lpsolve.LpStatus.INFEASIBLE


def test_optimizer_feasibility_postconditions():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(2, 8))
        m = int(rng.integers(1, min(3, n)))
        lower = rng.normal(size=n)
        upper = lower + rng.uniform(0.1, 1.5, size=n)
        E = rng.normal(size=(m, n))
        x0 = lower + rng.uniform(0, 1, size=n) * (upper - lower)
        lp = _make_lp(rng.normal(size=n), E, E @ x0, lower, upper)
        r = lpsolve.solve(lp)
        assert r.status is lpsolve.LpStatus.OPTIMAL
        assert np.all(r.w >= lp.lower - 1e-12)
        assert np.all(r.w <= lp.upper + 1e-12)
        assert np.max(np.abs(lp.E @ r.w - lp.rhs)) < 1e-9
        assert abs(float(lp.c @ r.w) - r.value) < 1e-12


@given(st.floats(0.1, 40.0))
@settings(max_examples=25)
def test_positive_scaling(alpha):
    lp = _make_lp([1.0, -2.0, 0.5], [[1.0, 1.0, 1.0]], [0.7],
                  [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    base = lpsolve.solve(lp)
    scaled = lpsolve.solve(_make_lp(alpha * lp.c, lp.E, lp.rhs, lp.lower, lp.upper))
    assert abs(scaled.value - alpha * base.value) < 1e-9 * (1 + abs(alpha * base.value))
    assert np.array_equal(scaled.w, base.w)


def test_bitwise_determinism():
    rng = np.random.default_rng(3)
    n, m = 7, 2
    lower = rng.normal(size=n)
    upper = lower + rng.uniform(0.1, 2.0, size=n)
    E = rng.normal(size=(m, n))
    x0 = lower + rng.uniform(0, 1, size=n) * (upper - lower)
    lp = _make_lp(rng.normal(size=n), E, E @ x0, lower, upper)
    a = lpsolve.solve(lp)
    b = lpsolve.solve(lp)
    assert a.value == b.value
    assert np.array_equal(a.w, b.w)


def test_validation_errors():
    with pytest.raises(ValueError):
        _make_lp([1.0], [[1.0]], [0.0], [0.0], [1.0])      # m == n
    with pytest.raises(ValueError):
        _make_lp([1.0, 1.0], np.zeros((0, 2)), [], [0.0, 0.0], [np.inf, 1.0])
    with pytest.raises(ValueError):
        _make_lp([1.0, 1.0], np.zeros((0, 2)), [], [2.0, 0.0], [1.0, 1.0])
