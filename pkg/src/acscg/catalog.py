"""
Constructors for the four example games and random instance generators.

* ``make_example1``      two players, two dimensions, nonlinear coupling,
                         kernel ``-exp(-x)``
* ``make_power_control`` multi-channel interference game, rates in bits
* ``make_jackson``       delay minimisation in an open Jackson network
* ``make_ici``           power control with inter-carrier interference
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (GameSpec, GeneralCoupling, KernelOfCouplingPenalty, Affine,
                    PerDimensionLinear, SumConstrainedSet, ThetaKernel, ZeroPenalty,
                    neg_exp_kernel)

LOG2_SCALE = 1.0 / math.log(2.0)


class GenerationError(RuntimeError):
    """A random generator could not produce a valid instance."""


def make_rng(seed):
    """Counter-based generator for ``seed`` (an int or a tuple of ints).

    Tuples such as ``(root, point, instance)`` give independent streams, so
    instances can be generated in any order or in parallel.
    """
    key = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


# ---------------------------------------------------------------------------
# two-player square-root coupling (catalog name "example1")
# ---------------------------------------------------------------------------

def _ex1_value(a):
    other = a[::-1]
    d = np.sqrt(other[:, 0] ** 2 + 1) - np.sqrt(other[:, 1] ** 2 + 1)
    return np.stack([d, -d], axis=1)


def _ex1_jacobian(a):
    G = np.zeros((2, 2, 2, 2))
    for n in range(2):
        m = 1 - n
        b = a[m]
        g = b / np.sqrt(b ** 2 + 1)
        G[m, n, 0, :] = [g[0], -g[1]]
        G[m, n, 1, :] = [-g[0], g[1]]
    return G


def example1_coupling():
    return GeneralCoupling(_ex1_value, _ex1_jacobian, 2, 2, tag="example1")


def make_example1(M1, M2):
    """Two players whose dimension-1 coupling is ``sqrt(b1^2+1) - sqrt(b2^2+1)``
    of the other player's action ``b``, dimension 2 its negation.

    Actions live in ``[0, M_n]^2`` with ``a^1 + a^2 <= M_n``.
    """
    if not (M1 > 0 and M2 > 0):
        raise ValueError("budgets must be positive")
    h = neg_exp_kernel()
    sets = [SumConstrainedSet([0.0, 0.0], [M, M], M) for M in (M1, M2)]
    return GameSpec(sets, [[h, h], [h, h]], example1_coupling(), ZeroPenalty(),
                    metadata={"name": "example1", "M1": float(M1), "M2": float(M2)})


def example1_t_bar_closed_form(M1, M2):
    """Entries ``2 M / sqrt(M^2 + 1)`` and the resulting spectral radius."""
    t12 = 2 * M1 / math.sqrt(M1 ** 2 + 1)
    t21 = 2 * M2 / math.sqrt(M2 ** 2 + 1)
    return np.array([[0.0, t12], [t21, 0.0]]), math.sqrt(
        4 * M1 * M2 / (math.sqrt(M1 ** 2 + 1) * math.sqrt(M2 ** 2 + 1)))


# ---------------------------------------------------------------------------
# power control
# ---------------------------------------------------------------------------

@dataclass
class PowerSpec:
    """Multi-channel interference instance.

    ``H[m, n, k]`` is the gain from transmitter ``m`` to receiver ``n`` on
    bin ``k``; ``sigma[n, k]`` the receiver noise; ``p_max[n]`` the power
    budget. ``mask_lower``/``mask_upper`` bound per-bin power (defaults 0 and
    ``p_max``). ``ici_window`` limits inter-carrier leakage to neighbours
    within that circular distance (None keeps all bins).
    """

    H: np.ndarray
    sigma: np.ndarray
    p_max: np.ndarray
    mask_lower: np.ndarray | None = None
    mask_upper: np.ndarray | None = None
    ici_window: int | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        N, N2, K = self.H.shape
        if N != N2:
            raise ValueError("H must have shape (N, N, K)")
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), (N, K)).copy()
        self.p_max = np.broadcast_to(np.asarray(self.p_max, dtype=float), (N,)).copy()
        if self.mask_lower is None:
            self.mask_lower = np.zeros((N, K))
        if self.mask_upper is None:
            self.mask_upper = np.repeat(self.p_max[:, None], K, axis=1)
        self.mask_lower = np.asarray(self.mask_lower, dtype=float)
        self.mask_upper = np.asarray(self.mask_upper, dtype=float)
        problems = []
        idx = np.arange(N)
        if np.any(self.H[idx, idx] <= 0):
            problems.append("direct gains H[n, n, k] must be positive")
        if np.any(self.H < 0):
            problems.append("gains must be non-negative")
        if np.any(self.sigma <= 0):
            problems.append("noise powers must be positive")
        if np.any(self.p_max <= 0):
            problems.append("power budgets must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def N(self):
        return self.H.shape[0]

    @property
    def K(self):
        return self.H.shape[2]

    def sets(self):
        return [SumConstrainedSet(self.mask_lower[n], self.mask_upper[n], self.p_max[n])
                for n in range(self.N)]

    def kernels(self):
        idx = np.arange(self.N)
        Hd = self.H[idx, idx]
        return [[ThetaKernel(-1.0, float(self.sigma[n, k]), float(Hd[n, k]), LOG2_SCALE)
                 for k in range(self.K)] for n in range(self.N)]

    def interference(self, P, ici=False):
        """Received interference power ``sum_{m != n} ...`` at every receiver."""
        P = np.asarray(P, dtype=float)
        H = self.H.copy()
        idx = np.arange(self.N)
        H[idx, idx] = 0.0
        if not ici:
            return np.einsum("mnk,mk->nk", H, P)
        gam = gamma_matrix(self.K, self.ici_window)  # [k, j]
        return np.einsum("kj,mnj,mj->nk", gam, H, P)

    def rates(self, P, ici=False):
        """Achievable rates ``sum_k log2(1 + SINR)`` per user, computed directly."""
        P = np.asarray(P, dtype=float)
        idx = np.arange(self.N)
        sig = self.H[idx, idx] * P
        sinr = sig / (self.sigma + self.interference(P, ici))
        return np.log2(1.0 + sinr).sum(axis=1)


def make_power_control(spec):
    """Rate game with ``h = log2(sigma + H_nn x)``, ``f = sum_m (H_mn/H_nn) P_m``
    and penalty ``log2(sigma + sum_m H_mn P_m)``."""
    idx = np.arange(spec.N)
    F = spec.H / spec.H[idx, idx][None, :, :]
    return GameSpec(spec.sets(), spec.kernels(), PerDimensionLinear(F),
                    KernelOfCouplingPenalty(),
                    metadata={"name": "power-control", "units": "watts, bits"})


def gamma_ici(j, K):
    """Inter-carrier leakage to the ``j``-th neighbouring bin of ``K``.

    ``1`` at ``j = 0`` and ``2 / (K^2 sin^2(pi j / K))`` otherwise, taken
    circularly so that ``gamma(j) == gamma(-j) == gamma(K - j)`` exactly.
    """
    K = int(K)
    jj = int(j) % K
    jj = min(jj, K - jj)
    if jj == 0:
        return 1.0
    return 2.0 / (K ** 2 * math.sin(math.pi * jj / K) ** 2)


def gamma_matrix(K, window=None):
    """``Gam[k, j] = gamma(k - j)``, zero beyond the circular ``window``."""
    out = np.empty((K, K))
    for k in range(K):
        for j in range(K):
            d = (k - j) % K
            d = min(d, K - d)
            out[k, j] = gamma_ici(k - j, K) if window is None or d <= window else 0.0
    return out


def make_ici(spec):
    """Power control where bin ``j`` leaks ``gamma(k-j)`` of its power into bin ``k``.

    The coupling seen by user ``n`` in bin ``k`` is the received leakage
    normalised by its own direct gain, ``sum_m sum_j gamma(k-j) H_mn^j P_m^j / H_nn^k``,
    so the kernel ``log2(sigma + H_nn x)`` reproduces the rate.
    """
    K = spec.K
    if K % 2:
        raise ValueError("the leakage window assumes an even number of bins")
    gam = gamma_matrix(K, spec.ici_window)
    idx = np.arange(spec.N)
    Hd = spec.H[idx, idx]                                  # [n, k]
    G = np.einsum("kj,mnj->mnkj", gam, spec.H) / Hd[None, :, :, None]
    return GameSpec(spec.sets(), spec.kernels(), Affine(G), KernelOfCouplingPenalty(),
                    metadata={"name": "ici", "units": "watts, bits"})


def random_power_spec(N, K, seed=0, cross=0.2, ici_window=None):
    rng = make_rng(seed)
    H = rng.uniform(0.0, cross, size=(N, N, K))
    idx = np.arange(N)
    H[idx, idx] = rng.uniform(0.5, 1.5, size=(N, K))
    return PowerSpec(H=H, sigma=rng.uniform(0.1, 1.0, size=(N, K)),
                     p_max=rng.uniform(1.0, 3.0, size=N), ici_window=ici_window)


# ---------------------------------------------------------------------------
# Jackson networks
# ---------------------------------------------------------------------------

@dataclass
class JacksonSpec:
    """Open multi-class Jackson network.

    ``r[m, n, k]`` routes class ``k`` from node ``m`` to ``n``; the rest,
    ``r0[m, k]``, leaves the network. ``mu[n, k]`` are service rates and
    ``psi_min[n]`` the minimum total external rate of node ``n``. Rate caps
    default to the largest uniform cap that keeps every queue stable with
    ``cap_fraction`` head-room.
    """

    r: np.ndarray
    mu: np.ndarray
    psi_min: np.ndarray
    psi_cap: np.ndarray | None = None
    cap_fraction: float = 0.95
    upsilon_: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        N, N2, K = self.r.shape
        if N != N2:
            raise ValueError("routing must have shape (N, N, K)")
        self.mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (N, K)).copy()
        self.psi_min = np.broadcast_to(np.asarray(self.psi_min, dtype=float), (N,)).copy()
        if np.any(self.r < 0) or np.any(self.r.sum(axis=1) > 1 + 1e-12):
            raise ValueError("routing probabilities must be non-negative with row sums <= 1")
        if np.any(self.mu <= 0) or np.any(self.psi_min <= 0):
            raise ValueError("service rates and minimum rates must be positive")
        self.upsilon_ = self._upsilon()
        if self.psi_cap is None:
            self.psi_cap = np.full((N, K), self.uniform_cap(self.cap_fraction))
        self.psi_cap = np.broadcast_to(np.asarray(self.psi_cap, dtype=float), (N, K)).copy()

    @property
    def N(self):
        return self.r.shape[0]

    @property
    def K(self):
        return self.r.shape[2]

    @property
    def r0(self):
        return 1.0 - self.r.sum(axis=1)

    def routing_matrix(self, k):
        """``R^k[m, n] = r[n, m, k]``."""
        return self.r[:, :, k].T

    def _upsilon(self):
        N, K = self.N, self.K
        out = np.empty((K, N, N))
        eye = np.eye(N)
        for k in range(K):
            R = self.routing_matrix(k)
            if np.max(np.abs(np.linalg.eigvals(R))) >= 1:
                raise ValueError(f"class {k}: routing has spectral radius >= 1; I - R is singular")
            out[k] = np.linalg.solve(eye - R, eye)
        return out

    @property
    def Upsilon(self):
        """``Upsilon[k] = (I - R^k)^{-1}``."""
        return self.upsilon_

    @property
    def upsilon(self):
        """``upsilon[m, n, k] = Upsilon^k[n, m]``: rate at ``n`` per unit injected at ``m``."""
        return self.upsilon_.transpose(2, 1, 0)

    def coupling_coefficients(self):
        ups = self.upsilon
        idx = np.arange(self.N)
        return ups / ups[idx, idx][None, :, :]

    def uniform_cap(self, fraction=0.95):
        """Largest ``c`` with ``max_{n,k} sum_m upsilon[m, n, k] c <= fraction * min mu``."""
        load = self.upsilon.sum(axis=0).max()
        return float(fraction * self.mu.min() / load)

    def arrival_rates(self, psi):
        """``eta[n, k] = sum_m upsilon[m, n, k] psi[m, k]``."""
        return np.einsum("mnk,mk->nk", self.upsilon, np.asarray(psi, dtype=float))

    def arrival_rates_direct(self, psi):
        """Solve the traffic equations ``eta = psi + r^T eta`` class by class."""
        psi = np.asarray(psi, dtype=float)
        eta = np.empty_like(psi)
        for k in range(self.K):
            eta[:, k] = np.linalg.solve(np.eye(self.N) - self.r[:, :, k].T, psi[:, k])
        return eta

    def delays(self, psi):
        """Total M/M/1 delay ``sum_k 1 / (mu - eta)`` of every node."""
        eta = self.arrival_rates(psi)
        slack = self.mu - eta
        with np.errstate(divide="ignore"):
            d = np.where(slack > 0, 1.0 / slack, np.inf)
        return d.sum(axis=1)

    def violations(self):
        out = []
        if np.any(self.K * self.psi_cap.min(axis=1) < self.psi_min - 1e-12):
            out.append("rate caps cannot carry the minimum rate of some node")
        worst = self.mu - np.einsum("mnk,mk->nk", self.upsilon, self.psi_cap)
        if np.any(worst <= 0):
            out.append("rate caps allow an unstable queue")
        return out


def make_jackson(spec):
    """Delay game on negated rates ``a = -psi``.

    Kernel ``-1/(mu + upsilon_nn x)`` (θ = -2, α = μ, F = υ_nn) evaluated at
    ``x = a_n + sum_m (upsilon_mn / upsilon_nn) a_m`` gives minus the
    class delay. Actions lie in ``[-cap, 0]`` with ``sum(a) <= -psi_min``.
    """
    bad = spec.violations()
    if bad:
        raise ValueError("; ".join(bad))
    N, K = spec.N, spec.K
    ups = spec.upsilon
    idx = np.arange(N)
    Fnn = ups[idx, idx]
    kernels = [[ThetaKernel(-2.0, float(spec.mu[n, k]), float(Fnn[n, k]))
                for k in range(K)] for n in range(N)]
    sets = [SumConstrainedSet(-spec.psi_cap[n], np.zeros(K), -spec.psi_min[n])
            for n in range(N)]
    return GameSpec(sets, kernels, PerDimensionLinear(spec.coupling_coefficients()),
                    ZeroPenalty(), metadata={"name": "jackson", "units": "negated packets/s"})


def jackson_delays(spec, profile):
    """Node delays of a game profile (negated rates)."""
    return spec.delays(-np.asarray(profile, dtype=float))


def random_routing(N, K, exit_prob, rng, self_routing=True):
    r = np.zeros((N, N, K))
    for k in range(K):
        for m in range(N):
            e = rng.exponential(size=N)
            if not self_routing:
                e[m] = 0.0
            r[m, :, k] = (1.0 - exit_prob) * e / e.sum()
    return r


def random_jackson(N, K, exit_prob, seed=0, self_routing=True, cap_fraction=0.95,
                   max_attempts=100):
    """Random network where every node exits with probability ``exit_prob``.

    The routed mass ``1 - exit_prob`` is split over destinations by a
    normalised exponential draw (uniform on the simplex); ``mu ~ U[4, 5]``,
    ``psi_min ~ U[0.6, 1]``.
    """
    if not 0 < exit_prob <= 1:
        raise ValueError("exit probability must lie in (0, 1]")
    if N < 2 and not self_routing:
        raise ValueError("a single node can only route to itself")
    rng = make_rng(seed)
    last = None
    for _ in range(max_attempts):
        r = random_routing(N, K, exit_prob, rng, self_routing)
        mu = rng.uniform(4.0, 5.0, size=(N, K))
        psi = rng.uniform(0.6, 1.0, size=N)
        try:
            spec = JacksonSpec(r=r, mu=mu, psi_min=psi, cap_fraction=cap_fraction)
        except ValueError as err:
            last = err
            continue
        if not spec.violations():
            return spec
        last = spec.violations()
    raise GenerationError(f"no valid network after {max_attempts} attempts: {last}")


# ---------------------------------------------------------------------------
# generic θ-family games
# ---------------------------------------------------------------------------

def random_theta_game(N, K, theta, seed=0, coupling=0.1, sign="mixed", budget=(1.0, 3.0),
                      upper=None):
    """Random θ-family game with per-dimension coupling of size ``coupling``.

    ``sign`` is ``mixed``, ``positive`` or ``negative``.
    """
    rng = make_rng(seed)
    F = rng.uniform(0.0, coupling, size=(N, N, K))
    if sign == "mixed":
        F *= rng.choice([-1.0, 1.0], size=F.shape)
    elif sign == "negative":
        F = -F
    M = rng.uniform(*budget, size=N)
    hi = np.full((N, K), np.inf) if upper is None else np.broadcast_to(upper, (N, K))
    sets = [SumConstrainedSet(np.zeros(K), hi[n], M[n]) for n in range(N)]
    alpha = rng.uniform(0.5, 2.0, size=(N, K))
    fs = rng.uniform(0.5, 2.0, size=(N, K))
    # keep kernel arguments positive: alpha + F (a + f) > 0 on the whole set
    kernels = [[ThetaKernel(float(theta), float(alpha[n, k] + fs[n, k] * coupling * N * M.max()),
                            float(fs[n, k])) for k in range(K)] for n in range(N)]
    return GameSpec(sets, kernels, PerDimensionLinear(F), ZeroPenalty(),
                    metadata={"name": "random-theta"})


def zero_coupling_game(N=2, K=2, theta=-1.0, budget=1.0):
    sets = [SumConstrainedSet(np.zeros(K), np.full(K, budget), budget) for _ in range(N)]
    kernels = [[ThetaKernel(theta, 1.0 + 0.5 * k, 1.0) for k in range(K)] for _ in range(N)]
    return GameSpec(sets, kernels, PerDimensionLinear(np.zeros((N, N, K))), ZeroPenalty(),
                    metadata={"name": "zero"})
