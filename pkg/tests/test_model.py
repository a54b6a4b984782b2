import numpy as np
import pytest
from hypothesis import given, strategies as st

from acscg.catalog import make_rng, zero_coupling_game
from acscg.model import (Affine, DomainError, GameSpec, GenericPenalty, InfeasibleError,
                         KernelOfCouplingPenalty, NumericError, PerDimensionLinear,
                         SumConstrainedSet, ThetaKernel, ZeroPenalty, affine_form,
                         neg_exp_kernel, own_gradient, own_gradients, random_feasible_profile,
                         total_utility_gradient, utilities, utility, utility_gradient, validate)
from acscg.pricing import prices
from catalog_games import all_catalog_games, four_catalog_games
from oracles import central_difference


def two_player_game(F12=0.5, F21=0.25, theta=-1.0):
    F = np.zeros((2, 2, 1))
    F[0, 1, 0] = F12
    F[1, 0, 0] = F21
    sets = [SumConstrainedSet([0.0], [1.0], 1.0) for _ in range(2)]
    kernels = [[ThetaKernel(theta, 1.0, 1.0)] for _ in range(2)]
    return GameSpec(sets, kernels, PerDimensionLinear(F), ZeroPenalty())


def test_utility_hand_value():
    g = two_player_game()
    a = np.array([[0.5], [1.0]])
    # u_0 = log(1 + 0.5 + F[1,0] * 1.0)
    assert utility(g, a, 0) == pytest.approx(np.log(1.75), abs=1e-15)
    assert utility(g, a, 1) == pytest.approx(np.log(2.25), abs=1e-15)


def test_out_of_domain_utility_is_minus_inf():
    F = np.zeros((2, 2, 1))
    F[1, 0, 0] = -2.0
    sets = [SumConstrainedSet([0.0], [1.0], 1.0) for _ in range(2)]
    g = GameSpec(sets, [[ThetaKernel(-1.0, 1.0, 1.0)]] * 2, PerDimensionLinear(F), ZeroPenalty())
    assert utilities(g, np.array([[0.0], [1.0]]))[0] == -np.inf


def test_derivative_raises_domain_error_with_index():
    F = np.zeros((2, 2, 1))
    F[1, 0, 0] = -2.0
    sets = [SumConstrainedSet([0.0], [1.0], 1.0) for _ in range(2)]
    g = GameSpec(sets, [[ThetaKernel(-1.0, 1.0, 1.0)]] * 2, PerDimensionLinear(F), ZeroPenalty())
    with pytest.raises(DomainError) as info:
        own_gradients(g, np.array([[0.0], [1.0]]))
    assert info.value.index == (0, 0)


def test_infeasible_profile_rejected():
    g = two_player_game()
    with pytest.raises(InfeasibleError):
        utilities(g, np.array([[1.5], [0.0]]))


def test_zero_coupling_reduces_to_own_kernel():
    g = zero_coupling_game(2, 2)
    a = np.array([[0.25, 0.75], [0.5, 0.5]])
    manual = [sum(np.log(1.0 + 0.5 * k + a[n, k]) for k in range(2)) for n in range(2)]
    np.testing.assert_allclose(utilities(g, a), manual, atol=1e-15)


def test_set_violations_messages():
    s = SumConstrainedSet([0, 0], [0.2, 0.3], 1.0)
    assert any("below the budget" in m for m in s.violations())
    s = SumConstrainedSet([1, 1], [2, 2], 1.0)
    assert any("exceeds the budget" in m for m in s.violations())
    assert SumConstrainedSet([0, 0], [1, 1], 1.0).violations() == []


def test_vertices_of_simplex_box():
    s = SumConstrainedSet([0, 0], [1, 1], 1.0)
    v = {tuple(x) for x in s.vertices()}
    assert v == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)}


def test_validate_flags_bad_kernel_parameters():
    sets = [SumConstrainedSet([0.0], [1.0], 1.0)]
    bad = [[ThetaKernel(0.5, 1.0, 1.0)]]
    g = GameSpec(sets, bad, PerDimensionLinear(np.zeros((1, 1, 1))), ZeroPenalty())
    assert any("theta must be negative" in m for m in validate(g))


def test_validate_flags_wrong_penalty_gradient():
    g0 = two_player_game()
    # g_n depends on the other player's action but the declared gradient is zero
    pen = GenericPenalty(lambda a: a[::-1] ** 2, lambda a: np.zeros((2, 2, 1, 1)))
    g = GameSpec(g0.sets, g0.kernels, g0.coupling, pen)
    assert any("penalty gradient" in m for m in validate(g))


@pytest.mark.parametrize("name", sorted(all_catalog_games()))
def test_catalog_games_validate(name):
    assert validate(all_catalog_games()[name]) == []


def test_affine_form_of_linear_coupling():
    F = make_rng(0).uniform(-1, 1, (3, 3, 2))
    G = affine_form(PerDimensionLinear(F)).G
    a = make_rng(1).uniform(0, 1, (3, 2))
    np.testing.assert_allclose(Affine(G).value(a), PerDimensionLinear(F).value(a), atol=1e-15)


def test_neg_exp_kernel_inverse():
    h = neg_exp_kernel()
    x = np.linspace(-2, 3, 11)
    np.testing.assert_allclose(h.d1_inv(h.d1(x)), x, atol=1e-12)
    assert np.all(h.d1_inv(np.array([0.0, -1.0])) == np.inf)


@given(st.sampled_from([-0.5, -1.0, -2.0, -3.0]), st.floats(0.1, 5), st.floats(0.1, 5),
       st.floats(0.1, 5), st.floats(0, 10))
def test_theta_kernel_derivatives(theta, alpha, fs, scale, x):
    h = ThetaKernel(theta, alpha, fs, scale)
    eps = 1e-6 * max(1.0, x)
    fd1 = (h.value(x + eps) - h.value(x - eps)) / (2 * eps)
    fd2 = (h.d1(x + eps) - h.d1(x - eps)) / (2 * eps)
    assert fd1 == pytest.approx(float(h.d1(x)), rel=1e-6)
    assert fd2 == pytest.approx(float(h.d2(x)), rel=1e-5)
    assert float(h.d1_inv(h.d1(x))) == pytest.approx(x, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("name", sorted(four_catalog_games()))
def test_own_gradient_and_prices_match_finite_differences(name):
    game = four_catalog_games()[name]
    rng = make_rng((7, 1))
    worst_own = worst_price = 0.0
    for _ in range(50):
        a = random_feasible_profile(game, rng, interior=True)
        fd = central_difference(lambda b: utilities(game, b, check=False), a)  # [n, k, m]
        D = np.transpose(fd, (2, 0, 1))  # [m, n, k] = d u_m / d a_n^k
        for n in range(game.N):
            g = own_gradient(game, a, n)
            worst_own = max(worst_own, float(np.max(np.abs(g - D[n, n])) / np.max(np.abs(g))))
        P = prices(game, a)
        ref = -D.copy()
        idx = np.arange(game.N)
        ref[idx, idx] = 0.0
        scale = max(float(np.max(np.abs(ref))), 1e-300)
        worst_price = max(worst_price, float(np.max(np.abs(P - ref))) / scale)
    assert worst_own <= 1e-5
    assert worst_price <= 1e-5


def test_total_gradient_sums_over_players():
    game = four_catalog_games()["power-control"]
    a = random_feasible_profile(game, make_rng(3), interior=True)
    np.testing.assert_allclose(total_utility_gradient(game, a),
                               utility_gradient(game, a).sum(axis=0), atol=0)


def test_kernel_of_coupling_penalty_gradient():
    game = four_catalog_games()["ici"]
    a = random_feasible_profile(game, make_rng(4), interior=True)
    pen = KernelOfCouplingPenalty()
    fd = central_difference(lambda b: pen.value(game, b), a)  # [m, j, n, k]
    ref = np.transpose(fd, (0, 2, 3, 1))
    got = pen.gradient(game, a)
    mask = ~np.eye(game.N, dtype=bool)
    np.testing.assert_allclose(got[mask], ref[mask], rtol=1e-6, atol=1e-9)
