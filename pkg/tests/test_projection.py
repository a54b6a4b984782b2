import numpy as np
import pytest
from hypothesis import given, strategies as st

from acscg.model import InfeasibleError, SumConstrainedSet
from acscg.projection import budget_multiplier, preference_weights, project, w_norm
from oracles import brute_force_projection


@st.composite
def projection_case(draw, max_k=4, weighted=True):
    K = draw(st.integers(1, max_k))
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-1, 1, K)
    hi = lo + rng.uniform(0.0, 2.0, K)
    M = rng.uniform(lo.sum(), hi.sum() + 1.0)
    p = rng.normal(0, 2, K)
    w = rng.uniform(0.1, 3.0, K) if weighted else None
    return p, w, SumConstrainedSet(lo, hi, M)


def test_budget_face_symmetric_point():
    s = SumConstrainedSet([0, 0], [1, 1], 1.0)
    np.testing.assert_allclose(project([1.0, 1.0], None, s), [0.5, 0.5], atol=1e-15)


def test_corner_solution():
    s = SumConstrainedSet([0, 0], [1, 1], 1.0)
    np.testing.assert_allclose(project([2.0, 0.0], None, s), [1.0, 0.0], atol=1e-15)


def test_feasible_point_on_budget_is_fixed():
    s = SumConstrainedSet([0, 0, 0], [1, 1, 1], 1.5)
    p = np.array([0.5, 0.25, 0.75])
    np.testing.assert_array_equal(project(p, None, s), p)


def test_multiplier_unbounded_box():
    s = SumConstrainedSet([0, 0], [np.inf, np.inf], 2.0)
    lam = budget_multiplier([0.0, 0.0], [1.0, 1.0], s)
    assert lam == pytest.approx(1.0, abs=1e-12)


def test_multiplier_single_coordinate():
    s = SumConstrainedSet([0.0], [3.0], 3.0)
    lam = budget_multiplier([1.0], [2.0], s)
    # clamp(1 + lam/2) = 3 first at lam = 4
    assert lam == pytest.approx(4.0, abs=1e-12)


def test_weighted_projection_matches_grid_minimiser():
    s = SumConstrainedSet([0, 0], [1, 1], 1.0)
    w = np.array([0.25, 0.75])
    p = np.array([0.9, 0.8])
    x = project(p, w, s)
    g = np.linspace(0, 1, 1001)
    X, Y = np.meshgrid(g, g, indexing="ij")
    ok = X + Y <= 1 + 1e-12
    obj = np.where(ok, w[0] * (X - p[0]) ** 2 + w[1] * (Y - p[1]) ** 2, np.inf)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    assert abs(x[0] - g[i]) <= 1e-3 and abs(x[1] - g[j]) <= 1e-3
    lam = budget_multiplier(p, w, s)
    np.testing.assert_allclose(np.clip(p + lam / w, 0, 1), x, atol=1e-12)


def test_empty_set_raises():
    s = SumConstrainedSet([1.0, 1.0], [2.0, 2.0], 1.0)
    with pytest.raises(InfeasibleError):
        project([0.0, 0.0], None, s)


def test_degenerate_coordinates_stay_fixed():
    s = SumConstrainedSet([0.3, 0.0, 0.0], [0.3, 1.0, 1.0], 1.0)
    x = project([5.0, 5.0, 4.0], None, s)
    assert x[0] == 0.3
    assert x.sum() == pytest.approx(1.0, abs=1e-12)


def test_preference_weights_normalised():
    w = preference_weights([1.0, 2.0, 4.0], -2.0)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(w, np.sqrt([1, 2, 4]) / np.sqrt([1, 2, 4]).sum())


def test_oracle_equivalence_500_cases():
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(500):
        K = int(rng.integers(1, 5))
        lo = rng.uniform(-1, 1, K)
        hi = lo + rng.uniform(0.0, 2.0, K)
        M = rng.uniform(lo.sum(), hi.sum() + 0.5)
        p = rng.normal(0, 2, K)
        w = rng.uniform(0.1, 3.0, K)
        s = SumConstrainedSet(lo, hi, M)
        ref = brute_force_projection(p, w, lo, hi, M)
        worst = max(worst, float(np.max(np.abs(project(p, w, s) - ref))))
    assert worst <= 1e-8


@given(projection_case())
def test_result_is_feasible(case):
    p, w, s = case
    assert s.contains(project(p, w, s), tol=1e-10)


@given(projection_case())
def test_idempotent(case):
    p, w, s = case
    x = project(p, w, s)
    np.testing.assert_allclose(project(x, w, s), x, atol=1e-10)


@given(projection_case(), st.integers(0, 2 ** 31))
def test_non_expansive(case, seed):
    p, w, s = case
    q = p + np.random.default_rng(seed).normal(0, 1, p.size)
    lhs = w_norm(project(p, w, s) - project(q, w, s), w)
    assert lhs <= w_norm(p - q, w) + 1e-10


@given(projection_case(), st.integers(0, 2 ** 31))
def test_variational_inequality(case, seed):
    p, w, s = case
    x = project(p, w, s)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        y = np.clip(rng.uniform(s.lower, s.upper), s.lower, s.upper)
        y = project(y, None, s)
        assert np.sum(w * (p - x) * (y - x)) <= 1e-9


@given(projection_case(max_k=4))
def test_matches_brute_force(case):
    p, w, s = case
    ref = brute_force_projection(p, w, s.lower, s.upper, s.budget)
    np.testing.assert_allclose(project(p, w, s), ref, atol=1e-8)
