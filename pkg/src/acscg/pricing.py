"""
Price-based distributed algorithms for maximising the total utility.

Each player ``m`` announces how much its utility falls per unit increase
of another player's action, ``pi[m, n, k] = -d u_m / d a_n^k``. A player
that subtracts the prices it receives from its own marginal utility is
following the gradient of the total utility, which is what gradient play
and the Jacobi update exploit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .best_response import DynamicsConfig, Trajectory, best_response
from .conditions import curvature_and_lipschitz
from .model import (DomainError, NoCertificateError, NumericError, UnsupportedError,
                    affine_form, as_profile, check_feasible, own_gradients,
                    utilities, utility_gradient)
from .projection import project

ALGORITHMS = ("gradient-play", "jacobi", "rosen")


def prices(game, profile):
    """Full price tensor ``pi[m, n, k] = -d u_m / d a_n^k`` (zero for ``m == n``)."""
    D = utility_gradient(game, profile)
    P = -D
    idx = np.arange(game.N)
    P[idx, idx, :] = 0.0
    return P


def received_prices(game, profile, P=None):
    """``sum_{m != n} pi[m, n, k]`` for each player ``n``, shape ``(N, K)``."""
    P = prices(game, profile) if P is None else P
    return P.sum(axis=0)


def reduced_prices(game, profile):
    """One price per player and dimension.

    When each penalty depends on the others only through the coupling
    aggregate ``f_m^k``, every price factors as
    ``pi[m, n, j] = sum_k (d f_m^k / d a_n^j) * rho[m, k]`` with
    ``rho[m, k] = -(h_m^k'(x_m^k) - dg_m^k/df_m^k)``. For a per-dimension
    coupling that is ``F[n, m, k] * rho[m, k]``.
    """
    if not game.penalty.aggregate:
        raise UnsupportedError("penalty does not depend on others through the aggregate only")
    a = as_profile(game, profile)
    hp = own_gradients(game, a)
    phi = game.penalty.aggregate_derivative(game, a)
    return -(hp - phi)


def expand_reduced_prices(game, reduced, profile=None):
    """Rebuild the full price tensor from reduced prices."""
    aff = affine_form(game.coupling)
    if aff is not None:
        G = aff.G
    else:
        if profile is None:
            raise UnsupportedError("a nonlinear coupling needs the profile to expand prices")
        G = game.coupling.jacobian(as_profile(game, profile))
    # G[n, m, k, j] = d f_m^k / d a_n^j
    P = np.einsum("nmkj,mk->mnj", G, np.asarray(reduced, dtype=float))
    idx = np.arange(game.N)
    P[idx, idx, :] = 0.0
    return P


def _project_all(game, a):
    return np.array([project(a[n], None, s) for n, s in enumerate(game.sets)])


def gradient_play_step(game, profile, kappa, priced=True):
    """One simultaneous projected-gradient step.

    ``a' = P_A(a + kappa * (du_n/da_n - sum_m pi[m, n]))`` with unit-weight
    projection per player. With ``priced=False`` the prices are dropped and
    each player climbs its own utility; ``kappa`` may then be a per-player
    vector.
    """
    a = as_profile(game, profile)
    k = np.asarray(kappa, dtype=float)
    if np.any(k <= 0):
        raise ValueError("step size must be positive")
    step = own_gradients(game, a)
    if priced:
        if k.ndim:
            raise ValueError("priced gradient play uses one step size for all players")
        step = step - received_prices(game, a)
    k = k.reshape(-1, 1) if k.ndim else k
    return _project_all(game, a + k * step)


def priced_best_response(game, n, profile, P=None):
    """Maximiser of ``u_n`` minus the payment ``sum_k a_n^k sum_m pi[m, n, k]``."""
    shift = received_prices(game, profile, P)[n]
    return best_response(game, n, profile, shift=shift)


def jacobi_step(game, profile, kappa, return_multipliers=False):
    """Move every player a fraction ``kappa`` towards its priced best response."""
    if not 0 < kappa <= 1:
        raise ValueError("Jacobi step size must lie in (0, 1]")
    a = as_profile(game, profile)
    P = prices(game, a)
    B = np.empty_like(a)
    lam = np.empty(game.N)
    for n in range(game.N):
        B[n], lam[n] = priced_best_response(game, n, a, P)
    out = a + kappa * (B - a)
    return (out, lam) if return_multipliers else out


@dataclass
class KktResiduals:
    stationarity: float
    complementarity: float
    feasibility: float
    multipliers: np.ndarray

    def max(self):
        return max(self.stationarity, self.complementarity, self.feasibility)


def kkt_residuals(game, profile, tol=1e-9):
    """Residuals of the first-order conditions of total-utility maximisation.

    The budget multiplier of each player is the median of its total-utility
    gradient over coordinates strictly inside the box (clipped at zero);
    bound multipliers take the non-negative part of what is left.
    ``stationarity`` is the largest remaining gradient mismatch,
    ``complementarity`` the largest multiplier-times-slack product, and
    ``feasibility`` the largest constraint violation.
    """
    a = as_profile(game, profile)
    d = utility_gradient(game, a).sum(axis=0)
    lo, hi, M = game.lower, game.upper, game.budget
    scale = np.maximum(1.0, np.abs(a))
    at_lo = a <= lo + tol * scale
    at_hi = a >= hi - tol * scale
    fixed = at_lo & at_hi
    free = ~(at_lo | at_hi)
    lam = np.zeros(game.N)
    stat = comp = 0.0
    for n in range(game.N):
        if free[n].any():
            lam_n = float(np.median(d[n, free[n]]))
        else:
            cand_lo = d[n, at_lo[n] & ~fixed[n]]
            cand_hi = d[n, at_hi[n] & ~fixed[n]]
            low = cand_lo.max() if cand_lo.size else -np.inf
            high = cand_hi.min() if cand_hi.size else np.inf
            lam_n = low if np.isfinite(low) else (high if np.isfinite(high) else 0.0)
            if np.isfinite(low) and np.isfinite(high) and low <= high:
                lam_n = low
        lam_n = max(lam_n, 0.0)
        lam[n] = lam_n
        r = d[n] - lam_n
        nu = np.where(at_hi[n], np.maximum(r, 0.0), 0.0)
        nup = np.where(at_lo[n], np.maximum(-r, 0.0), 0.0)
        res = np.where(fixed[n], 0.0, r - nu + nup)
        stat = max(stat, float(np.max(np.abs(res))))
        slack = M[n] - a[n].sum()
        comp = max(comp, abs(lam_n * slack),
                   float(np.max(nu * np.abs(hi[n] - a[n]), initial=0.0)),
                   float(np.max(nup * np.abs(a[n] - lo[n]), initial=0.0)))
    with np.errstate(invalid="ignore"):
        feas = max(float(np.max(lo - a, initial=0.0)), float(np.max(a - hi, initial=0.0)),
                   float(np.max(a.sum(axis=1) - M, initial=0.0)), 0.0)
    return KktResiduals(stat, comp, feas, lam)


def safe_stepsize(game, algorithm, margin=0.05, sup_samples=None, curvature=None):
    """Step size with a guaranteed ascent of the total utility.

    Gradient play: ``(2/L)(1 - margin)``. Jacobi:
    ``min(2/L * min_curvature, 1) * (1 - margin)`` where ``min_curvature``
    is ``-max_{n,k} sup h''``.
    """
    if algorithm not in ("gradient-play", "jacobi"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if curvature is None:
        kw = {} if sup_samples is None else {"sup_samples": sup_samples}
        curvature = curvature_and_lipschitz(game, **kw)
    c = curvature
    if not c.finite or not c.total_L > 0:
        where = f" at (n, k) = {c.offending}" if c.offending is not None else ""
        raise NoCertificateError(f"curvature or Lipschitz bound is not finite{where}")
    base = 2.0 / c.total_L
    if algorithm == "gradient-play":
        return base * (1 - margin)
    if not c.sup_h2 < 0:
        raise NoCertificateError("kernel curvature is not bounded away from zero")
    return min(base * (-c.sup_h2), 1.0) * (1 - margin)


def run_pricing(game, init, algorithm="jacobi", kappa=0.2, config=None):
    """Iterate a pricing scheme with fresh prices every stage.

    Parameters
    ----------
    algorithm : {"gradient-play", "jacobi", "rosen"}
        ``rosen`` is gradient play without prices; ``kappa`` may then be a
        per-player vector.

    Returns
    -------
    Trajectory
        ``extra`` holds ``sum_utility`` and the per-stage KKT residuals
        ``stationarity``, ``complementarity`` and ``feasibility``.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    config = DynamicsConfig(schedule="parallel") if config is None else config
    a = as_profile(game, init).copy()
    check_feasible(game, a)
    N = game.N
    profiles = [a.copy()]
    utils = [utilities(game, a, check=False)]
    mults = [np.full(N, np.nan)]
    kkt = [kkt_residuals(game, a)]
    converged = False
    stage = 0
    for stage in range(1, config.max_iter + 1):
        prev = a
        try:
            if algorithm == "jacobi":
                a, lam = jacobi_step(game, prev, kappa, return_multipliers=True)
            else:
                a = gradient_play_step(game, prev, kappa, priced=algorithm == "gradient-play")
                lam = np.full(N, np.nan)
        except (DomainError, NumericError) as err:
            raise type(err)(f"stage {stage}: {err}") from err
        profiles.append(a.copy())
        utils.append(utilities(game, a, check=False))
        r = kkt_residuals(game, a)
        kkt.append(r)
        mults.append(lam if algorithm == "jacobi" else r.multipliers)
        if np.abs(a - prev).sum(axis=1).max() <= config.tol:
            converged = True
            break
    P = np.array(profiles)
    U = np.array(utils)
    resid = np.zeros((P.shape[0], N))
    resid[1:] = np.clip(np.diff(P, axis=0), 0, None).sum(axis=2)
    extra = {
        "algorithm": algorithm,
        "kappa": kappa,
        "sum_utility": U.sum(axis=1),
        "stationarity": np.array([r.stationarity for r in kkt]),
        "complementarity": np.array([r.complementarity for r in kkt]),
        "feasibility": np.array([r.feasibility for r in kkt]),
    }
    return Trajectory(profiles=P, utilities=U, residual_1norm=resid,
                      multipliers=np.array(mults), converged=converged,
                      iterations=stage - 1 if converged else stage,
                      schedule="parallel", extra=extra)
