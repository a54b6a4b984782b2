import numpy as np
import pytest
from hypothesis import given, strategies as st

from acscg.catalog import (GenerationError, JacksonSpec, PowerSpec, example1_t_bar_closed_form,
                           gamma_ici, gamma_matrix, jackson_delays, make_example1, make_ici,
                           make_jackson, make_power_control, make_rng, random_jackson,
                           random_power_spec)
from acscg.conditions import spectral_radius
from acscg.model import random_feasible_profile, utilities


def test_rate_decomposition_identity():
    spec = random_power_spec(4, 5, seed=3)
    g = make_power_control(spec)
    rng = make_rng(0)
    worst = 0.0
    for _ in range(100):
        P = random_feasible_profile(g, rng, interior=bool(rng.integers(2)))
        worst = max(worst, float(np.max(np.abs(utilities(g, P) - spec.rates(P)))))
    assert worst <= 1e-12


def test_ici_rates_identity():
    spec = random_power_spec(3, 6, seed=8)
    g = make_ici(spec)
    rng = make_rng(1)
    for _ in range(50):
        P = random_feasible_profile(g, rng)
        np.testing.assert_allclose(utilities(g, P), spec.rates(P, ici=True), atol=1e-12, rtol=0)


def test_ici_without_leakage_is_power_control():
    spec = random_power_spec(3, 4, seed=9, ici_window=0)
    gi, gp = make_ici(spec), make_power_control(spec)
    P = random_feasible_profile(gp, make_rng(2))
    np.testing.assert_allclose(utilities(gi, P), utilities(gp, P), atol=1e-13)


def test_single_user_rate_without_interference():
    spec = random_power_spec(2, 3, seed=10)
    g = make_power_control(spec)
    P = np.zeros((2, 3))
    P[0] = [0.5, 0.25, 0.25]
    single = np.log2(1 + spec.H[0, 0] * P[0] / spec.sigma[0]).sum()
    assert utilities(g, P)[0] == pytest.approx(single, abs=1e-13)


def test_ici_needs_even_bins():
    with pytest.raises(ValueError):
        make_ici(random_power_spec(2, 3, seed=0))


def test_gamma_values():
    assert gamma_ici(0, 8) == 1.0
    assert gamma_ici(2, 4) == pytest.approx(0.125, abs=1e-16)


@pytest.mark.parametrize("K", range(2, 65, 2))
def test_gamma_symmetry_exact(K):
    for j in range(-K, 2 * K):
        v = gamma_ici(j, K)
        assert v == gamma_ici(-j, K)
        assert v == gamma_ici(K - j, K)
    G = gamma_matrix(K)
    assert np.array_equal(G, G.T)


def test_gamma_window_masks_far_bins():
    G = gamma_matrix(8, window=1)
    assert G[0, 2] == 0.0 and G[0, 1] > 0 and G[0, 7] > 0


def test_jackson_two_node_hand_example():
    r = np.zeros((2, 2, 1))
    r[0, 1, 0] = 0.5
    spec = JacksonSpec(r=r, mu=5.0, psi_min=[0.6, 0.6])
    np.testing.assert_allclose(spec.Upsilon[0], [[1.0, 0.0], [0.5, 1.0]], atol=1e-15)
    F = spec.coupling_coefficients()
    assert F[0, 1, 0] == pytest.approx(0.5, abs=1e-15)
    assert F[1, 0, 0] == 0.0


def test_no_routing_means_no_coupling():
    spec = JacksonSpec(r=np.zeros((3, 3, 2)), mu=4.5, psi_min=0.8)
    np.testing.assert_array_equal(spec.Upsilon, np.broadcast_to(np.eye(3), (2, 3, 3)))
    g = make_jackson(spec)
    idx = np.arange(3)
    off = g.coupling.F.copy()
    off[idx, idx] = 0
    assert not off.any()


def test_arrival_rates_solve_traffic_equations():
    spec = random_jackson(5, 3, 0.5, seed=4)
    psi = make_rng(3).uniform(0.1, 0.3, (5, 3))
    np.testing.assert_allclose(spec.arrival_rates(psi), spec.arrival_rates_direct(psi),
                               rtol=1e-10, atol=1e-12)


def test_jackson_utilities_are_minus_delays():
    spec = random_jackson(4, 3, 0.6, seed=6)
    g = make_jackson(spec)
    a = random_feasible_profile(g, make_rng(5), interior=True)
    np.testing.assert_allclose(utilities(g, a), -jackson_delays(spec, a), rtol=1e-12)


@given(st.floats(0.3, 1.0), st.integers(0, 2 ** 31))
def test_generated_routing_rows(exit_prob, seed):
    spec = random_jackson(5, 3, exit_prob, seed=seed)
    np.testing.assert_allclose(spec.r.sum(axis=1), 1 - exit_prob, atol=1e-12)
    assert np.all(spec.coupling_coefficients() >= 0)


@given(st.integers(0, 2 ** 31))
def test_delays_finite_on_feasible_profiles(seed):
    spec = random_jackson(5, 3, 0.45, seed=seed)
    g = make_jackson(spec)
    rng = make_rng((seed, 2))
    for _ in range(10):
        psi = -random_feasible_profile(g, rng, interior=bool(rng.integers(2)))
        assert np.all(spec.mu - spec.arrival_rates(psi) > 0)
    # the worst case: every node at its cap in every class
    assert np.all(spec.mu - spec.arrival_rates(spec.psi_cap) > 0)


def test_exit_prob_one_has_zero_coupling():
    spec = random_jackson(4, 2, 1.0, seed=3)
    assert not spec.r.any()


def test_class_radius_bound_at_point_eight():
    for seed in range(20):
        F = random_jackson(5, 3, 0.8, seed=seed).coupling_coefficients()
        for k in range(3):
            S = F[:, :, k].copy()
            np.fill_diagonal(S, 0.0)
            assert spectral_radius(S) <= 0.25 + 1e-9


def test_generation_error_after_attempts():
    with pytest.raises(GenerationError):
        # caps cannot carry the minimum rate when the head-room is tiny
        random_jackson(3, 1, 0.5, seed=0, cap_fraction=1e-3, max_attempts=3)


def test_power_spec_validation():
    with pytest.raises(ValueError):
        PowerSpec(H=np.zeros((2, 2, 1)), sigma=1.0, p_max=1.0)


def test_example1_closed_form_values():
    T, rho = example1_t_bar_closed_form(2 / 3, 1.0)
    assert rho == pytest.approx(np.sqrt(4 * (2 / 3) / (np.sqrt(13 / 9) * np.sqrt(2))), abs=1e-15)
    assert T[0, 1] == pytest.approx(2 * (2 / 3) / np.sqrt(13 / 9))
    g = make_example1(2 / 3, 1.0)
    assert g.budget.tolist() == [2 / 3, 1.0]
