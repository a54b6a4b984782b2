import numpy as np
import pytest
from scipy.optimize import minimize

from acscg.best_response import DynamicsConfig, best_response
from acscg.catalog import (make_ici, make_jackson, make_power_control, make_rng, random_jackson,
                           random_power_spec, zero_coupling_game)
from acscg.model import random_feasible_profile, total_utility_gradient, utilities
from acscg.pricing import (expand_reduced_prices, gradient_play_step, jacobi_step,
                           kkt_residuals, priced_best_response, prices, received_prices,
                           reduced_prices, run_pricing, safe_stepsize)


@pytest.fixture(scope="module")
def jackson_small():
    spec = random_jackson(3, 2, 0.7, seed=21, cap_fraction=0.5)
    return make_jackson(spec)


def test_prices_have_zero_diagonal(jackson_small):
    a = random_feasible_profile(jackson_small, make_rng(0), interior=True)
    P = prices(jackson_small, a)
    assert np.all(P[np.arange(3), np.arange(3)] == 0)
    np.testing.assert_allclose(received_prices(jackson_small, a), P.sum(axis=0))


@pytest.mark.parametrize("builder", [
    lambda: make_power_control(random_power_spec(3, 3, seed=4)),
    lambda: make_ici(random_power_spec(3, 4, seed=4)),
    lambda: make_jackson(random_jackson(4, 2, 0.6, seed=4)),
])
def test_reduced_prices_rebuild_full_prices(builder):
    g = builder()
    a = random_feasible_profile(g, make_rng(1), interior=True)
    full = prices(g, a)
    rebuilt = expand_reduced_prices(g, reduced_prices(g, a))
    np.testing.assert_allclose(rebuilt, full, rtol=1e-12, atol=1e-14)


def test_priced_gradient_is_total_gradient(jackson_small):
    a = random_feasible_profile(jackson_small, make_rng(2), interior=True)
    hp = total_utility_gradient(jackson_small, a)
    from acscg.model import own_gradients
    np.testing.assert_allclose(own_gradients(jackson_small, a) - received_prices(jackson_small, a),
                               hp, rtol=1e-12, atol=1e-14)


def test_jacobi_full_step_is_priced_best_response(jackson_small):
    a = random_feasible_profile(jackson_small, make_rng(3), interior=True)
    b = jacobi_step(jackson_small, a, 1.0)
    for n in range(3):
        np.testing.assert_allclose(b[n], priced_best_response(jackson_small, n, a)[0], atol=1e-14)


def test_zero_shift_priced_response_is_best_response(jackson_small):
    a = random_feasible_profile(jackson_small, make_rng(4), interior=True)
    x, lam = best_response(jackson_small, 1, a, shift=np.zeros(2))
    y, mu = best_response(jackson_small, 1, a)
    np.testing.assert_allclose(x, y, atol=1e-12)
    assert lam == pytest.approx(mu, rel=1e-10)


def test_step_size_validation(jackson_small):
    a = random_feasible_profile(jackson_small, make_rng(5), interior=True)
    with pytest.raises(ValueError):
        jacobi_step(jackson_small, a, 1.5)
    with pytest.raises(ValueError):
        gradient_play_step(jackson_small, a, -0.1)
    with pytest.raises(ValueError):
        run_pricing(jackson_small, a, "newton")


def test_kkt_zero_at_hand_optimum():
    g = zero_coupling_game(1, 2)  # log(1 + x0) + log(1.5 + x1), x0 + x1 <= 1, x in [0, 1]
    a = np.array([[0.75, 0.25]])
    r = kkt_residuals(g, a)
    assert r.stationarity <= 1e-15 and r.complementarity == 0 and r.feasibility == 0
    assert r.multipliers[0] == pytest.approx(1 / 1.75)
    # gradients 1/1.5 and 1/2 around the median multiplier 7/12
    assert kkt_residuals(g, np.array([[0.5, 0.5]])).stationarity == pytest.approx(1 / 12)


def test_pricing_limit_matches_direct_optimiser(jackson_small):
    g = jackson_small
    N, K = g.N, g.K
    a0 = random_feasible_profile(g, make_rng(6), interior=True)
    tr = run_pricing(g, a0, "jacobi", 0.5, DynamicsConfig(schedule="parallel", tol=1e-12))
    assert tr.converged

    def neg(x):
        return -utilities(g, x.reshape(N, K), check=False).sum()

    def grad(x):
        return -total_utility_gradient(g, x.reshape(N, K)).ravel()

    cons = [{"type": "ineq", "fun": (lambda x, n=n: g.budget[n] - x.reshape(N, K)[n].sum())}
            for n in range(N)]
    bounds = list(zip(g.lower.ravel(), g.upper.ravel()))
    res = minimize(neg, a0.ravel(), jac=grad, bounds=bounds, constraints=cons,
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    assert res.success
    np.testing.assert_allclose(tr.final.ravel(), res.x, atol=1e-5)
    assert kkt_residuals(g, tr.final).max() <= 1e-8


@pytest.mark.parametrize("algo", ["gradient-play", "jacobi"])
def test_safe_step_gives_monotone_ascent(jackson_small, algo):
    g = jackson_small
    kappa = min(safe_stepsize(g, algo), 1.0)
    a0 = random_feasible_profile(g, make_rng(7), interior=True)
    tr = run_pricing(g, a0, algo, kappa, DynamicsConfig(schedule="parallel", max_iter=3000))
    assert np.diff(tr.extra["sum_utility"]).min() >= -1e-12
    assert tr.converged


def test_rosen_mode_accepts_per_player_steps(jackson_small):
    g = jackson_small
    a0 = random_feasible_profile(g, make_rng(8), interior=True)
    tr = run_pricing(g, a0, "rosen", np.array([0.05, 0.1, 0.2]),
                     DynamicsConfig(schedule="parallel", tol=1e-12, max_iter=20000))
    assert tr.converged
    # the unpriced fixed point is the Nash equilibrium
    for n in range(g.N):
        np.testing.assert_allclose(best_response(g, n, tr.final)[0], tr.final[n], atol=1e-8)


def test_trajectory_extras(jackson_small):
    g = jackson_small
    a0 = random_feasible_profile(g, make_rng(9), interior=True)
    tr = run_pricing(g, a0, "jacobi", 0.3, DynamicsConfig(schedule="parallel", max_iter=5))
    T = tr.profiles.shape[0]
    for key in ("sum_utility", "stationarity", "complementarity", "feasibility"):
        assert tr.extra[key].shape == (T,)
    assert np.all(tr.extra["feasibility"] <= 1e-9)
