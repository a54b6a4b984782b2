"""
Game model for additively coupled sum-constrained games.

Player ``n`` picks a K-vector ``a_n`` from a box intersected with a budget
half-space and receives

    u_n(a) = sum_k h_n^k(a_n^k + f_n^k(a_{-n})) - g_n^k(a_{-n})

where ``h`` are increasing strictly concave kernels, ``f`` is the coupling
and ``g`` a penalty. Profiles are plain ``(N, K)`` float arrays.

Array conventions used throughout the package:

* ``F[m, n, k]``      coefficient of ``a_m^k`` in ``f_n^k`` (per-dimension).
* ``G[m, n, k, j]``   ``d f_n^k / d a_m^j`` (affine or Jacobian form).
* ``D[m, n, k]``      ``d u_m / d a_n^k`` (full utility gradient).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FEAS_TOL = 1e-9


class DomainError(ValueError):
    """A kernel argument left the kernel's domain."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InfeasibleError(ValueError):
    """A profile or action set violates the feasibility constraints."""


class UnsupportedError(ValueError):
    """The operation does not apply to this kind of kernel or coupling."""


class NumericError(RuntimeError):
    """A root bracket or iteration failed to settle."""


class NoCertificateError(ValueError):
    """A bound needed for a certificate is infinite or undefined."""


# ---------------------------------------------------------------------------
# Action sets
# ---------------------------------------------------------------------------

def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SumConstrainedSet:
    """Box ``[lower, upper]`` intersected with ``sum(x) <= budget``."""

    lower: np.ndarray
    upper: np.ndarray
    budget: float

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lower))
        hi = _frozen(np.atleast_1d(self.upper))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        budget = float(self.budget)
        if math.isnan(budget):
            raise ValueError("budget must be a number")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "budget", budget)

    @property
    def dimension(self):
        return self.lower.shape[0]

    @property
    def target(self):
        """Budget level an increasing objective drives the sum to."""
        return min(self.budget, float(self.upper.sum()))

    def violations(self):
        out = []
        bad = np.nonzero(self.lower > self.upper)[0]
        if bad.size:
            out.append(f"lower > upper in coordinates {bad.tolist()}")
        if self.upper.sum() < self.budget:
            out.append(
                f"sum of upper bounds {self.upper.sum():.6g} is below the budget "
                f"{self.budget:.6g}; the budget must be reachable within the box")
        if self.lower.sum() > self.budget:
            out.append(
                f"sum of lower bounds {self.lower.sum():.6g} exceeds the budget "
                f"{self.budget:.6g}; the set is empty")
        return out

    def feasibility_gap(self, x):
        """Largest violation of the box or budget constraints at ``x``."""
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            box = max(float(np.max(self.lower - x, initial=0.0)),
                      float(np.max(x - self.upper, initial=0.0)))
        return max(box, float(x.sum() - self.budget), 0.0)

    def contains(self, x, tol=FEAS_TOL):
        return self.feasibility_gap(x) <= tol

    def effective_upper(self):
        """Upper bounds tightened by what the budget leaves for each coordinate."""
        slack = self.budget - self.lower.sum()
        return np.minimum(self.upper, self.lower + max(slack, 0.0))

    def vertices(self, max_dimension=12):
        """Extreme points of the set, by enumeration (small K only)."""
        K = self.dimension
        if K > max_dimension:
            raise UnsupportedError(f"vertex enumeration limited to K <= {max_dimension}")
        lo, hi = self.lower, self.effective_upper()
        pts = []
        corners = np.array(np.meshgrid(*[[0, 1]] * K, indexing="ij")).reshape(K, -1).T
        for c in corners:
            x = np.where(c == 1, hi, lo)
            if x.sum() <= self.budget + FEAS_TOL:
                pts.append(x)
            for j in range(K):
                y = x.copy()
                y[j] = self.budget - (x.sum() - x[j])
                if lo[j] - FEAS_TOL <= y[j] <= hi[j] + FEAS_TOL:
                    pts.append(np.clip(y, lo, hi))
        pts = np.unique(np.round(np.array(pts), 14), axis=0)
        return pts


# ---------------------------------------------------------------------------
# Utility kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaKernel:
    """Fairness family ``h(x) = scale * phi(alpha + f_self * x)``.

    ``phi(z) = log z`` for ``theta == -1`` and ``z**(theta+1)/(theta+1)``
    otherwise. Values are ``-inf`` where ``alpha + f_self * x <= 0``.
    ``scale`` is a positive constant multiplier (``1/ln 2`` turns natural
    logs into bits); it leaves best responses and all coupling matrices
    unchanged.
    """

    theta: float
    alpha: float
    f_self: float
    scale: float = 1.0

    def _z(self, x):
        return self.alpha + self.f_self * np.asarray(x, dtype=float)

    def in_domain(self, x):
        return self._z(x) > 0

    def value(self, x):
        z = self._z(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.theta == -1:
                v = np.log(z)
            else:
                v = z ** (self.theta + 1) / (self.theta + 1)
        return self.scale * np.where(z > 0, v, -np.inf)

    def d1(self, x):
        z = self._z(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(z > 0, self.scale * self.f_self * z ** self.theta, np.nan)

    def d2(self, x):
        z = self._z(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(z > 0, self.scale * self.theta * self.f_self ** 2
                            * z ** (self.theta - 1), np.nan)

    def d1_inv(self, lam):
        lam = np.asarray(lam, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = ((lam / (self.scale * self.f_self)) ** (1.0 / self.theta)
                 - self.alpha) / self.f_self
        return np.where(lam > 0, x, np.inf)


@dataclass(frozen=True)
class GenericKernel:
    """Kernel given by four vectorised callables.

    ``d1_inv`` is only called with positive arguments; non-positive
    marginal values map to ``+inf`` because ``h`` is increasing.
    ``tag`` names a closed form the game-file format knows how to restore.
    """

    value_fn: Callable
    d1_fn: Callable
    d2_fn: Callable
    d1_inv_fn: Callable
    tag: str | None = None

    def in_domain(self, x):
        return np.isfinite(self.value_fn(np.asarray(x, dtype=float)))

    def value(self, x):
        return np.asarray(self.value_fn(np.asarray(x, dtype=float)), dtype=float)

    def d1(self, x):
        return np.asarray(self.d1_fn(np.asarray(x, dtype=float)), dtype=float)

    def d2(self, x):
        return np.asarray(self.d2_fn(np.asarray(x, dtype=float)), dtype=float)

    def d1_inv(self, lam):
        lam = np.asarray(lam, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.asarray(self.d1_inv_fn(np.where(lam > 0, lam, 1.0)), dtype=float)
        return np.where(lam > 0, x, np.inf)


def neg_exp_kernel():
    """``h(x) = -exp(-x)``."""
    return GenericKernel(
        value_fn=lambda x: -np.exp(-x),
        d1_fn=lambda x: np.exp(-x),
        d2_fn=lambda x: -np.exp(-x),
        d1_inv_fn=lambda lam: -np.log(lam),
        tag="neg-exp",
    )


class KernelTable:
    """Vectorised view of an ``N x K`` grid of kernels.

    Every method takes ``x`` of shape ``(len(rows), K)`` and a row index
    array; θ-family grids are evaluated with array arithmetic, anything
    else element by element.
    """

    def __init__(self, kernels):
        self.grid = tuple(tuple(row) for row in kernels)
        self.N = len(self.grid)
        self.K = len(self.grid[0]) if self.N else 0
        self.theta_family = all(isinstance(h, ThetaKernel) for row in self.grid for h in row)
        first = self.grid[0][0] if self.N and self.K else None
        self.shared = first if all(h is first for row in self.grid for h in row) else None
        if self.theta_family:
            def arr(attr):
                return _frozen([[getattr(h, attr) for h in row] for row in self.grid])
            self.theta = arr("theta")
            self.alpha = arr("alpha")
            self.f_self = arr("f_self")
            self.scale = arr("scale")

    def common_theta(self):
        """The shared θ if every kernel is θ-family with one θ, else None."""
        if not self.theta_family:
            return None
        t = np.unique(self.theta)
        return float(t[0]) if t.size == 1 else None

    def row_theta(self, n):
        if not self.theta_family:
            return None
        t = np.unique(self.theta[n])
        return float(t[0]) if t.size == 1 else None

    def _rows(self, rows):
        if rows is None:
            return np.arange(self.N)
        return np.atleast_1d(np.asarray(rows, dtype=int))

    def _theta_eval(self, which, x, rows):
        th, al, F, s = (self.theta[rows], self.alpha[rows], self.f_self[rows],
                        self.scale[rows])
        if which == "d1_inv":
            lam = x
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = ((lam / (s * F)) ** (1.0 / th) - al) / F
            return np.where(lam > 0, out, np.inf)
        z = al + F * x
        ok = z > 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if which == "value":
                v = np.where(th == -1, np.log(z), z ** (th + 1) / np.where(th == -1, 1.0, th + 1))
                return np.where(ok, s * v, -np.inf)
            if which == "d1":
                return np.where(ok, s * F * z ** th, np.nan)
            return np.where(ok, s * th * F ** 2 * z ** (th - 1), np.nan)

    def _eval(self, which, x, rows):
        rows = self._rows(rows)
        x = np.asarray(x, dtype=float)
        x = np.broadcast_to(x, (rows.size, self.K))
        if self.theta_family:
            return self._theta_eval(which, x, rows)
        if self.shared is not None:
            return getattr(self.shared, which)(x)
        out = np.empty((rows.size, self.K))
        for i, n in enumerate(rows):
            for k in range(self.K):
                out[i, k] = getattr(self.grid[n][k], which)(x[i, k])
        return out

    def value(self, x, rows=None):
        return self._eval("value", x, rows)

    def d1(self, x, rows=None):
        return self._eval("d1", x, rows)

    def d2(self, x, rows=None):
        return self._eval("d2", x, rows)

    def d1_inv(self, lam, rows=None):
        return self._eval("d1_inv", lam, rows)


# ---------------------------------------------------------------------------
# Couplings
# ---------------------------------------------------------------------------

class PerDimensionLinear:
    """``f_n^k = sum_{m != n} F[m, n, k] * a_m^k``."""

    kind = "per-dimension-linear"

    def __init__(self, F):
        F = np.array(F, dtype=float)
        if F.ndim != 3 or F.shape[0] != F.shape[1]:
            raise ValueError("F must have shape (N, N, K)")
        idx = np.arange(F.shape[0])
        F[idx, idx, :] = 0.0
        F.setflags(write=False)
        self.F = F

    @property
    def shape(self):
        return self.F.shape[0], self.F.shape[2]

    def value(self, a):
        return np.einsum("mnk,mk->nk", self.F, a)

    def jacobian(self, a=None):
        return self.to_affine().G

    def to_affine(self):
        N, K = self.shape
        G = np.zeros((N, N, K, K))
        kk = np.arange(K)
        G[:, :, kk, kk] = self.F
        return Affine(G)


class Affine:
    """``f_n^k = sum_{m != n} sum_j G[m, n, k, j] * a_m^j``."""

    kind = "affine"

    def __init__(self, G):
        G = np.array(G, dtype=float)
        if G.ndim != 4 or G.shape[0] != G.shape[1] or G.shape[2] != G.shape[3]:
            raise ValueError("G must have shape (N, N, K, K)")
        idx = np.arange(G.shape[0])
        G[idx, idx] = 0.0
        G.setflags(write=False)
        self.G = G

    @property
    def shape(self):
        return self.G.shape[0], self.G.shape[2]

    def value(self, a):
        return np.einsum("mnkj,mj->nk", self.G, a)

    def jacobian(self, a=None):
        return self.G

    def to_affine(self):
        return self


class GeneralCoupling:
    """Nonlinear coupling from two callables on a full ``(N, K)`` profile.

    ``value_fn(a)`` returns ``f`` with shape ``(N, K)``; ``jacobian_fn(a)``
    returns ``G`` with shape ``(N, N, K, K)`` in the ``[m, n, k, j]``
    layout. Entries with ``m == n`` are ignored.
    """

    kind = "general"

    def __init__(self, value_fn, jacobian_fn, N, K, tag=None):
        self.value_fn = value_fn
        self.jacobian_fn = jacobian_fn
        self._shape = (N, K)
        self.tag = tag

    @property
    def shape(self):
        return self._shape

    def value(self, a):
        return np.asarray(self.value_fn(np.asarray(a, dtype=float)), dtype=float)

    def jacobian(self, a):
        G = np.array(self.jacobian_fn(np.asarray(a, dtype=float)), dtype=float)
        idx = np.arange(self._shape[0])
        G[idx, idx] = 0.0
        return G

    def to_affine(self):
        raise UnsupportedError("a general coupling has no affine form")


def affine_form(coupling):
    """Affine view of a coupling, or None when it is genuinely nonlinear."""
    if coupling.kind == "general":
        return None
    return coupling.to_affine()


# ---------------------------------------------------------------------------
# Penalties
# ---------------------------------------------------------------------------

class ZeroPenalty:
    kind = "zero"
    aggregate = True

    def value(self, game, a):
        return np.zeros((game.N, game.K))

    def gradient(self, game, a):
        return np.zeros((game.N, game.N, game.K, game.K))

    def aggregate_derivative(self, game, a):
        return np.zeros((game.N, game.K))


class KernelOfCouplingPenalty:
    """``g_n^k(a_{-n}) = h_n^k(f_n^k(a_{-n}))``.

    With θ = -1 kernels this is the interference term of the
    power-control utilities: ``log2(sigma + H_nn * f)``.
    """

    kind = "kernel-of-coupling"
    aggregate = True

    def value(self, game, a):
        return game.table.value(game.coupling.value(a))

    def aggregate_derivative(self, game, a):
        f = game.coupling.value(a)
        return _checked(game.table.d1(f), "penalty kernel derivative")

    def gradient(self, game, a):
        phi = self.aggregate_derivative(game, a)
        J = game.coupling.jacobian(a)
        return J * phi[None, :, :, None]


class GenericPenalty:
    """Penalty from callables ``value_fn(a) -> (N, K)`` and
    ``gradient_fn(a) -> (N, N, K, K)`` in the ``[m, n, k, j]`` layout.

    ``lipschitz`` is a user-declared bound on the gradient's Lipschitz
    constant; ``aggregate_fn(a) -> (N, K)`` gives ``dg_n^k/df_n^k`` when
    the penalty depends on others only through the coupling aggregate.
    """

    kind = "generic"

    def __init__(self, value_fn, gradient_fn, lipschitz=None, aggregate_fn=None):
        self.value_fn = value_fn
        self.gradient_fn = gradient_fn
        self.lipschitz = lipschitz
        self.aggregate_fn = aggregate_fn

    @property
    def aggregate(self):
        return self.aggregate_fn is not None

    def value(self, game, a):
        return np.asarray(self.value_fn(a), dtype=float)

    def gradient(self, game, a):
        dg = np.array(self.gradient_fn(a), dtype=float)
        idx = np.arange(game.N)
        dg[idx, idx] = 0.0
        return dg

    def aggregate_derivative(self, game, a):
        if self.aggregate_fn is None:
            raise UnsupportedError("penalty does not declare aggregate dependence")
        return np.asarray(self.aggregate_fn(a), dtype=float)


def _checked(values, what):
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise DomainError(f"{what} out of domain at (n, k) = {idx}", idx)
    return values


# ---------------------------------------------------------------------------
# Game
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GameSpec:
    """A complete game instance. Treat as immutable after construction."""

    sets: tuple
    kernels: tuple
    coupling: object
    penalty: object = field(default_factory=ZeroPenalty)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        sets = tuple(self.sets)
        kernels = tuple(tuple(row) for row in self.kernels)
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "kernels", kernels)
        N = len(sets)
        if N == 0:
            raise ValueError("a game needs at least one player")
        K = sets[0].dimension
        if any(s.dimension != K for s in sets):
            raise ValueError("all action sets must share one dimension K")
        if len(kernels) != N or any(len(row) != K for row in kernels):
            raise ValueError("kernels must be an N x K grid")
        if tuple(self.coupling.shape) != (N, K):
            raise ValueError(f"coupling shape {self.coupling.shape} does not match ({N}, {K})")
        object.__setattr__(self, "table", KernelTable(kernels))
        object.__setattr__(self, "lower", _frozen([s.lower for s in sets]))
        object.__setattr__(self, "upper", _frozen([s.upper for s in sets]))
        object.__setattr__(self, "budget", _frozen([s.budget for s in sets]))

    @property
    def N(self):
        return len(self.sets)

    @property
    def K(self):
        return self.sets[0].dimension

    def kernel_arguments(self, a):
        """``a_n^k + f_n^k(a_{-n})`` for every player and dimension."""
        a = np.asarray(a, dtype=float)
        return a + self.coupling.value(a)


def as_profile(game, a):
    a = np.asarray(a, dtype=float)
    if a.shape != (game.N, game.K):
        raise ValueError(f"profile must have shape ({game.N}, {game.K}), got {a.shape}")
    return a


def _check_player(game, n):
    if not 0 <= n < game.N:
        raise IndexError(f"player index {n} out of range for N = {game.N}")


def feasibility_report(game, a, tol=FEAS_TOL):
    """List of ``(n, gap)`` pairs for players whose action is infeasible."""
    a = as_profile(game, a)
    out = []
    for n, s in enumerate(game.sets):
        gap = s.feasibility_gap(a[n])
        if gap > tol:
            out.append((n, gap))
    return out


def check_feasible(game, a, tol=FEAS_TOL):
    bad = feasibility_report(game, a, tol)
    if bad:
        desc = ", ".join(f"player {n} (violation {g:.3g})" for n, g in bad)
        raise InfeasibleError(f"infeasible profile: {desc}")


def utilities(game, a, check=True):
    """All players' utilities; ``-inf`` where a kernel argument is out of domain."""
    a = as_profile(game, a)
    if check:
        check_feasible(game, a)
    x = a + game.coupling.value(a)
    h = game.table.value(x)
    g = game.penalty.value(game, a)
    return (h - g).sum(axis=1)


def utility(game, a, n, check=True):
    _check_player(game, n)
    return float(utilities(game, a, check=check)[n])


def own_gradients(game, a):
    """``d u_n / d a_n^k`` for every player, shape ``(N, K)``."""
    a = as_profile(game, a)
    x = a + game.coupling.value(a)
    return _checked(game.table.d1(x), "kernel argument")


def own_gradient(game, a, n):
    _check_player(game, n)
    return own_gradients(game, a)[n]


def utility_gradient(game, a):
    """Full Jacobian ``D[m, n, k] = d u_m / d a_n^k``."""
    a = as_profile(game, a)
    hp = own_gradients(game, a)
    J = game.coupling.jacobian(a)
    dg = game.penalty.gradient(game, a)
    D = np.einsum("mk,nmkj->mnj", hp, J) - dg.sum(axis=2).transpose(1, 0, 2)
    idx = np.arange(game.N)
    D[idx, idx, :] = hp
    return D


def total_utility_gradient(game, a):
    """``d (sum_m u_m) / d a_n^k``, shape ``(N, K)``."""
    return utility_gradient(game, a).sum(axis=0)


def random_feasible_profile(game, rng, interior=False):
    """Uniform-ish feasible profile; budget bound when ``interior`` is False."""
    out = np.empty((game.N, game.K))
    for n, s in enumerate(game.sets):
        out[n] = random_feasible_action(s, rng, on_budget=not interior)
    return out


def random_feasible_action(aset, rng, on_budget=True):
    lo, hi = aset.lower, aset.effective_upper()
    target = aset.target if on_budget else rng.uniform(lo.sum(), aset.target)
    spare = target - lo.sum()
    room = hi - lo
    if spare <= 0 or room.sum() <= 0:
        return lo.copy()
    # water-fill a random direction into the box so the sum hits the target
    w = rng.dirichlet(np.ones(aset.dimension))
    x = lo.copy()
    left = spare
    free = room > 0
    for _ in range(aset.dimension + 1):
        if left <= 1e-15 or not free.any():
            break
        step = w * free
        step = step / step.sum() * left
        cap = np.minimum(step, hi - x)
        x += cap
        left -= cap.sum()
        free &= (hi - x) > 1e-15
    return np.clip(x, lo, hi)


def validate(game, rng=None):
    """Diagnostics for violated invariants; an empty list means well formed."""
    out = []
    for n, s in enumerate(game.sets):
        out += [f"player {n}: {msg}" for msg in s.violations()]
    for n, row in enumerate(game.kernels):
        for k, h in enumerate(row):
            if isinstance(h, ThetaKernel):
                if not h.theta < 0:
                    out.append(f"kernel ({n}, {k}): theta must be negative, got {h.theta}")
                if not h.f_self > 0:
                    out.append(f"kernel ({n}, {k}): f_self must be positive, got {h.f_self}")
                if not h.scale > 0:
                    out.append(f"kernel ({n}, {k}): scale must be positive, got {h.scale}")
    if out:
        return out
    rng = np.random.default_rng(0) if rng is None else rng
    # kernel sanity and handle consistency at a few random feasible profiles
    for trial in range(3):
        a = random_feasible_profile(game, rng)
        x = game.kernel_arguments(a)
        if not np.all(np.isfinite(game.table.value(x))):
            continue
        d1 = game.table.d1(x)
        d2 = game.table.d2(x)
        if np.any(d1 <= 0):
            out.append("kernel first derivative is not positive at a sampled profile")
        if np.any(d2 >= 0):
            out.append("kernel second derivative is not negative at a sampled profile")
        back = game.table.d1_inv(d1)
        if np.any(np.abs(back - x) > 1e-6 * np.maximum(1.0, np.abs(x))):
            out.append("kernel inverse derivative does not invert the derivative")
        if game.coupling.kind == "general":
            err = _fd_relative_error(game.coupling.value, game.coupling.jacobian(a), a)
            if err > 1e-5:
                out.append(f"coupling jacobian disagrees with finite differences ({err:.2e})")
        if isinstance(game.penalty, GenericPenalty):
            err = _fd_relative_error(lambda b: game.penalty.value(game, b),
                                     game.penalty.gradient(game, a), a, own_zero=True)
            if err > 1e-5:
                out.append(f"penalty gradient disagrees with finite differences ({err:.2e})")
        break
    return sorted(set(out), key=out.index)


def _fd_relative_error(fn, J, a, own_zero=False, step=1e-6):
    N, K = a.shape
    worst = 0.0
    scale = max(1.0, float(np.max(np.abs(J))))
    for m in range(N):
        for j in range(K):
            h = step * max(1.0, abs(a[m, j]))
            ap, am = a.copy(), a.copy()
            ap[m, j] += h
            am[m, j] -= h
            fd = (fn(ap) - fn(am)) / (2 * h)
            mask = np.ones(N, dtype=bool)
            mask[m] = False
            worst = max(worst, float(np.max(np.abs(fd[mask] - J[m, mask, :, j]))) / scale)
    return worst
