"""
Single-player best responses and best-response dynamics.

A player's best response equalises marginal utility across its free
coordinates::

    x_k(lam) = clamp(inv_h'_k(lam + shift_k) - f_k, lower_k, upper_k)

with the water level ``lam`` chosen so the budget is met. ``x(lam)`` is
non-increasing in ``lam`` which makes the level a bracketed scalar root.
For θ-family kernels with a common exponent the sum is piecewise linear
in ``lam**(1/theta)`` and is solved exactly by sorting breakpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import (DomainError, NumericError, UnsupportedError, affine_form,
                    as_profile, check_feasible, utilities, _check_player)

MAX_DOUBLINGS = 128
SCHEDULES = ("sequential", "parallel")


@dataclass
class DynamicsConfig:
    """Settings shared by every iterative scheme."""

    schedule: str = "sequential"
    tol: float = 1e-8
    max_iter: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        self.max_iter = int(self.max_iter)


@dataclass
class Trajectory:
    """Per-stage record of an iterative run.

    Row ``t`` of every array belongs to stage ``t``; row 0 is the initial
    profile. ``residual_1norm[t, n]`` is the positive part
    ``sum_k max(a_n^t - a_n^{t-1}, 0)``. ``iterations`` counts the stages
    before the one that confirmed convergence, so a game without coupling
    reports one.
    """

    profiles: np.ndarray
    utilities: np.ndarray
    residual_1norm: np.ndarray
    multipliers: np.ndarray
    converged: bool
    iterations: int
    schedule: str = "sequential"
    extra: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.profiles[-1]

    @property
    def stages(self):
        return self.profiles.shape[0] - 1

    def changes(self):
        """``a^t - a^{t-1}`` for ``t >= 1``, shape ``(T, N, K)``."""
        return np.diff(self.profiles, axis=0)

    def change_1norm(self):
        return np.abs(self.changes()).sum(axis=2)


# ---------------------------------------------------------------------------
# single-player solvers
# ---------------------------------------------------------------------------

def _player_data(game, n, profile):
    a = as_profile(game, profile)
    _check_player(game, n)
    f = game.coupling.value(a)[n]
    s = game.sets[n]
    return f, s.lower, s.upper, s.budget


def _actions_at(game, n, f, lo, hi, shift):
    def x_of(lam):
        inv = game.table.d1_inv(lam + shift, rows=n)[0]
        with np.errstate(invalid="ignore"):
            return np.clip(inv - f, lo, hi)
    return x_of


def _finite_pos(v):
    return v if np.isfinite(v) and v > 0 else None


def _solve_level(x_of, target, a, b_guess, context):
    """Root of ``sum(x_of(lam)) = target`` on ``lam >= a``.

    ``a`` must satisfy ``sum(x_of(a)) >= target``. ``b_guess`` is a level
    expected to put every coordinate at its lower bound; it is replaced by
    geometric doubling when missing or wrong.
    """
    def g(lam):
        return float(x_of(lam).sum()) - target

    b = b_guess
    if b is None or b <= a or not g(b) <= 0:
        b = max(2.0 * a, 1.0) if b is None or b <= a else 2.0 * b
        for _ in range(MAX_DOUBLINGS):
            if g(b) <= 0:
                break
            b *= 2.0
        else:
            raise NumericError(
                f"{context}: no water level brings the sum down to {target:.6g} "
                f"(last level tried {b:.3g})")
    ga = g(a)
    if ga == 0:
        return a
    # brentq needs finite ends; shrink towards the finite side first
    for _ in range(400):
        if np.isfinite(ga):
            break
        mid = 0.5 * (a + b) if a <= 0 else np.sqrt(a * b)
        gm = g(mid)
        if gm <= 0:
            b = mid
            if gm == 0:
                return mid
        else:
            a, ga = mid, gm
    gb = g(b)
    if gb == 0:
        return b
    return brentq(g, a, b, xtol=1e-300, rtol=1e-15, maxiter=500)


def _close_budget(x, lo, hi, target):
    gap = target - x.sum()
    if gap == 0:
        return x
    free = (x > lo) & (x < hi)
    if free.any():
        x = x.copy()
        x[free] += gap / free.sum()
        x = np.clip(x, lo, hi)
    return x


def _lower_in_domain(game, n, lo, f):
    return bool(np.all(np.isfinite(game.table.value(lo + f, rows=n))))


def best_response(game, n, profile, shift=None):
    """Best response of player ``n`` by bisection on the water level.

    Parameters
    ----------
    game : GameSpec
    n : int
        Player index.
    profile : array_like
        Joint profile, only ``a_{-n}`` is read.
    shift : array_like, optional
        Per-coordinate price added to the water level. With a shift the
        budget may be slack, in which case the returned level is 0.

    Returns
    -------
    x : ndarray
        The best-response action.
    lam : float
        The water level (budget multiplier).
    """
    f, lo, hi, M = _player_data(game, n, profile)
    priced = shift is not None
    shift = np.zeros(game.K) if shift is None else np.asarray(shift, dtype=float)
    x_of = _actions_at(game, n, f, lo, hi, shift)
    ctx = f"player {n}"
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        hp_hi = game.table.d1(hi + f, rows=n)[0]
        hp_lo = game.table.d1(lo + f, rows=n)[0]

    if priced:
        x0 = x_of(0.0)
        if x0.sum() <= M:
            if not np.all(np.isfinite(x0)):
                raise DomainError(f"{ctx}: unbounded priced best response", (n,))
            return x0, 0.0
        target = M
        a = 0.0
        with np.errstate(invalid="ignore"):
            lo_guess = np.min(hp_hi - shift)
        if np.isfinite(lo_guess) and lo_guess > 0:
            a = float(lo_guess)
        b = _finite_pos(float(np.max(hp_lo - shift)))
    else:
        if hi.sum() <= M:
            with np.errstate(invalid="ignore"):
                lam = float(np.min(hp_hi))
            if not np.isfinite(lam):
                raise DomainError(f"{ctx}: upper bounds leave the kernel domain", (n,))
            return hi.astype(float).copy(), lam
        target = M
        lam_a = float(np.min(hp_hi))
        a = lam_a if np.isfinite(lam_a) and lam_a > 0 else 0.0
        b = _finite_pos(float(np.max(hp_lo)))
    try:
        lam = _solve_level(x_of, target, a, b, ctx)
    except NumericError:
        if not _lower_in_domain(game, n, lo, f):
            raise DomainError(f"{ctx}: no feasible action keeps the kernel arguments "
                              "in their domain", (n,)) from None
        raise
    x = _close_budget(x_of(lam), lo, hi, target)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{ctx}: best response is not finite", (n,))
    return x, float(lam)


def water_fill_theta(game, n, profile):
    """Closed-form best response for θ-family players.

    Writing ``mu = lam**(1/theta)`` the action is
    ``clamp(c_k * mu - d_k)`` with ``c_k = (s F)**(-1/theta) / F`` and
    ``d_k = alpha/F + f_k``. The clamped sum is piecewise linear in ``mu``
    and the budget equation is solved on the segment that crosses it.

    Raises
    ------
    UnsupportedError
        If player ``n`` has a non-θ kernel or mixed exponents.
    """
    th = game.table.row_theta(n) if 0 <= n < game.N else None
    _check_player(game, n)
    if th is None:
        raise UnsupportedError(f"player {n}: closed form needs θ-family kernels with one θ")
    f, lo, hi, M = _player_data(game, n, profile)
    al, F, s = game.table.alpha[n], game.table.f_self[n], game.table.scale[n]
    if hi.sum() <= M:
        hp = game.table.d1(hi + f, rows=n)[0]
        lam = float(np.min(hp))
        if not np.isfinite(lam):
            raise DomainError(f"player {n}: upper bounds leave the kernel domain", (n,))
        return hi.astype(float).copy(), lam
    c = (s * F) ** (-1.0 / th) / F
    d = al / F + f

    def total(mu):
        return np.clip(c * mu - d, lo, hi).sum()

    s0 = total(0.0)
    if s0 >= M:
        raise DomainError(f"player {n}: no feasible action keeps the kernel arguments "
                          "in their domain", (n,))
    with np.errstate(invalid="ignore"):
        bps = np.concatenate(((lo + d) / c, (hi + d) / c))
    bps = np.unique(bps[np.isfinite(bps) & (bps > 0)])
    mu = None
    prev_mu, prev_s = 0.0, s0
    for bp in bps:
        sb = total(bp)
        if sb >= M:
            mu = prev_mu + (M - prev_s) * (bp - prev_mu) / (sb - prev_s)
            break
        prev_mu, prev_s = bp, sb
    if mu is None:
        # past the last breakpoint only coordinates without an upper bound still
        # grow; decide "has left its lower bound" from the breakpoint itself,
        # since c * mu - d at that breakpoint may round just below lo
        with np.errstate(invalid="ignore"):
            started = (lo + d) / c <= prev_mu
        slope = c[started & ~np.isfinite(hi)].sum()
        if slope <= 0:
            raise NumericError(f"player {n}: budget {M:.6g} unreachable")
        mu = prev_mu + (M - prev_s) / slope
    x = _close_budget(np.clip(c * mu - d, lo, hi), lo, hi, M)
    return x, float(mu ** th)


def _br_solver(game, n, method):
    if method == "bisection":
        return best_response
    closed = game.table.row_theta(n) is not None
    if method == "closed-form":
        if not closed:
            raise UnsupportedError(f"player {n}: closed form needs θ-family kernels")
        return water_fill_theta
    if method == "auto":
        return water_fill_theta if closed else best_response
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

def _with_context(err, stage, n):
    cls = type(err)
    try:
        new = cls(f"stage {stage}, player {n}: {err}")
    except TypeError:
        return err
    if isinstance(err, DomainError):
        new.index = err.index
    return new


def run_dynamics(game, init, config=None, method="auto"):
    """Iterate best responses until the profile stops moving.

    Parameters
    ----------
    game : GameSpec
    init : array_like
        Feasible starting profile.
    config : DynamicsConfig, optional
    method : {"auto", "bisection", "closed-form"}
        Single-player solver. ``auto`` uses the closed form wherever a
        player has θ-family kernels.

    Returns
    -------
    Trajectory
    """
    config = DynamicsConfig() if config is None else config
    a = as_profile(game, init).copy()
    check_feasible(game, a)
    solvers = [_br_solver(game, n, method) for n in range(game.N)]
    N = game.N
    profiles = [a.copy()]
    utils = [utilities(game, a, check=False)]
    mults = [np.full(N, np.nan)]
    converged = False
    stage = 0
    for stage in range(1, config.max_iter + 1):
        prev = a.copy()
        lam = np.empty(N)
        base = prev if config.schedule == "parallel" else a
        new = a if config.schedule == "sequential" else np.empty_like(a)
        for n in range(N):
            try:
                new[n], lam[n] = solvers[n](game, n, base)
            except (DomainError, NumericError) as err:
                raise _with_context(err, stage, n) from err
        a = new
        profiles.append(a.copy())
        utils.append(utilities(game, a, check=False))
        mults.append(lam)
        if np.abs(a - prev).sum(axis=1).max() <= config.tol:
            converged = True
            break
    P = np.array(profiles)
    resid = np.zeros((P.shape[0], N))
    resid[1:] = np.clip(np.diff(P, axis=0), 0, None).sum(axis=2)
    return Trajectory(
        profiles=P, utilities=np.array(utils), residual_1norm=resid,
        multipliers=np.array(mults), converged=converged,
        iterations=stage - 1 if converged else stage,
        schedule=config.schedule)


# ---------------------------------------------------------------------------
# contraction bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class ContractionReport:
    """Stage-wise residual bound check.

    ``lhs[i, n]`` is the positive-part residual of player ``n`` at stage
    ``i + 2`` and ``rhs[i, n]`` the bound built from the previous stage's
    changes (the current stage's for players already updated under the
    sequential schedule). ``rhs_sharp`` is the tighter bound available
    when the coupling has one sign.
    """

    lhs: np.ndarray
    rhs: np.ndarray
    rhs_sharp: np.ndarray | None
    violations: list
    sharp_violations: list
    slack: float

    @property
    def ok(self):
        return not self.violations and not self.sharp_violations

    @property
    def worst_excess(self):
        if self.lhs.size == 0:
            return -np.inf
        return float(np.max(self.lhs - self.rhs))


def coupling_bound_matrix(game):
    """``B[m, n] = max_j sum_k |d f_n^k / d a_m^j|`` for affine couplings."""
    aff = affine_form(game.coupling)
    if aff is None:
        raise UnsupportedError("residual bounds need a linear or affine coupling")
    return np.abs(aff.G).sum(axis=2).max(axis=2)


def coupling_sign(game):
    """+1 if every coupling derivative is >= 0, -1 if all <= 0, else 0."""
    aff = affine_form(game.coupling)
    if aff is None:
        return 0
    G = aff.G
    if np.all(G >= 0):
        return 1
    if np.all(G <= 0):
        return -1
    return 0


def contraction_check(game, trajectory, slack=1e-9):
    """Verify the stage-wise residual contraction along a best-response run.

    For every stage ``t >= 2`` and player ``n`` checks

        e_n^t <= sum_{m != n} B[m, n] * ||a_m^s - a_m^{s-1}||_1

    where ``e`` is the positive-part residual and ``s`` is ``t - 1`` (or
    ``t`` for already-updated players in the sequential schedule). Once
    both stages bind the budget ``||.||_1 = 2 e`` and this is the factor-2
    bound. With a sign-uniform coupling the sharper
    ``sum_m B[m, n] * max(e_m^+, e_m^-)`` bound is checked as well.
    """
    B = coupling_bound_matrix(game)
    np.fill_diagonal(B, 0.0)
    D = trajectory.changes()
    T, N, _ = D.shape
    pos = np.clip(D, 0, None).sum(axis=2)
    neg = np.clip(-D, 0, None).sum(axis=2)
    l1 = pos + neg
    big = np.maximum(pos, neg)
    sign = coupling_sign(game)
    lhs = pos[1:] if T > 1 else np.zeros((0, N))
    rhs = np.zeros_like(lhs)
    sharp = np.zeros_like(lhs) if sign != 0 else None
    lower = np.tril(np.ones((N, N), dtype=bool), -1)  # lower[n, m] -> m < n
    for i in range(lhs.shape[0]):
        t = i + 1  # index into D of the stage being bounded
        if trajectory.schedule == "sequential":
            src = np.where(lower, l1[t][None, :], l1[t - 1][None, :])
            srcb = np.where(lower, big[t][None, :], big[t - 1][None, :])
        else:
            src = np.broadcast_to(l1[t - 1], (N, N))
            srcb = np.broadcast_to(big[t - 1], (N, N))
        rhs[i] = (B.T * src).sum(axis=1)
        if sharp is not None:
            sharp[i] = (B.T * srcb).sum(axis=1)
    viol = [(i + 2, n, float(lhs[i, n]), float(rhs[i, n]))
            for i, n in zip(*np.nonzero(lhs > rhs + slack))]
    sviol = []
    if sharp is not None:
        sviol = [(i + 2, n, float(lhs[i, n]), float(sharp[i, n]))
                 for i, n in zip(*np.nonzero(lhs > sharp + slack))]
    return ContractionReport(lhs, rhs, sharp, viol, sviol, slack)
