"""
Coupling matrices, spectral radii and convergence certificates.

Matrices are indexed ``[m, n]`` = influence of player ``m`` on player
``n`` and always have a zero diagonal.

* ``T``      max_k |F_mn^k|                          (per-dimension coupling)
* ``S``      preference-weighted ``T`` for θ-family kernels
* ``T_bar``  max_{a, j} sum_k |d f_n^k / d a_m^j|     (any differentiable coupling)
* ``S_bar``  preference-weighted ``T_bar``

Certificates, all on spectral radii ρ:

======  =============================================  ==========================
label   test                                           needs
======  =============================================  ==========================
C1      ρ(T) < 1/2                                     per-dimension coupling
C2      ρ(T) < 1                                       ... and one-signed F
C3      ρ(S) < 1                                       ... and θ-family kernels
C4      ρ(T_bar) < 1/2                                 differentiable coupling
C5      ρ(T_bar) < 1                                   ... one-signed derivatives
C6      ρ(S_bar) < 1                                   ... θ-family kernels
C7      bounded curvature, Lipschitz penalty gradient  linear or affine coupling
C8      C7 and strictly negative curvature             linear or affine coupling
======  =============================================  ==========================

C1-C6 certify best-response dynamics; C7 gradient play and C8 the
Jacobi update. Sampled suprema (nonlinear couplings) are flagged as not
certified.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .model import UnsupportedError, affine_form
from .projection import project

DEFAULT_SUP_SAMPLES = 2 ** 13


class Status(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    NOT_APPLICABLE = "not-applicable"

    def __str__(self):
        return self.value


def _status(applicable, ok):
    if not applicable:
        return Status.NOT_APPLICABLE
    return Status.HOLDS if ok else Status.FAILS


# ---------------------------------------------------------------------------
# spectral radius
# ---------------------------------------------------------------------------

def spectral_radius(matrix, tol=1e-10, eps=1e-12, max_iter=10_000):
    """Perron root of a non-negative square matrix.

    Power iteration on ``A + eps*J + I`` (``J`` all ones). The perturbed
    matrix is positive, so the iteration converges; the unit shift removes
    the oscillation that periodic matrices such as ``[[0, a], [b, 0]]``
    would otherwise cause. Iteration stops when the Collatz-Wielandt
    bounds ``min(Bx/x) <= rho(B) <= max(Bx/x)`` are within ``tol``. The
    result overestimates ``rho(A)`` by at most ``N*eps + tol``.

    Examples
    --------
    >>> round(spectral_radius([[0, 0.3], [0.2, 0]]), 7)
    0.244949
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(A < 0) or not np.all(np.isfinite(A)):
        raise ValueError("spectral_radius needs a finite non-negative matrix")
    N = A.shape[0]
    if N == 0:
        return 0.0
    if not A.any():
        return 0.0
    B = A + eps + np.eye(N)
    x = np.ones(N)
    lo = hi = np.nan
    for _ in range(max_iter):
        y = B @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= tol:
            return float(max(0.5 * (lo + hi) - 1.0, 0.0))
        x = y / y.max()
    # slow mixing: fall back to a dense eigen-solve of the unperturbed matrix
    return float(np.max(np.abs(np.linalg.eigvals(A))))


# ---------------------------------------------------------------------------
# coupling matrices
# ---------------------------------------------------------------------------

def _coupling_of(obj):
    return obj.coupling if hasattr(obj, "coupling") and hasattr(obj, "sets") else obj


def build_t_max(coupling):
    """``T[m, n] = max_k |F[m, n, k]|`` for a per-dimension linear coupling."""
    c = _coupling_of(coupling)
    if getattr(c, "kind", None) != "per-dimension-linear":
        raise UnsupportedError("T needs a per-dimension linear coupling; use build_t_bar_max")
    T = np.abs(c.F).max(axis=2)
    np.fill_diagonal(T, 0.0)
    return T


def _require_theta(game):
    th = game.table.common_theta()
    if th is None:
        raise UnsupportedError("pre-weighted matrices need θ-family kernels with one θ")
    return th


def preference_matrix(game):
    """``W[n, k]``: per-dimension preference weights (unnormalised).

    For θ-family kernels the best response is a weighted projection with
    weights proportional to ``F_nn**(1+1/theta) * scale**(1/theta)``.
    """
    th = _require_theta(game)
    t = game.table
    return t.f_self ** (1.0 + 1.0 / th) * t.scale ** (1.0 / th)


def build_s_max(game):
    """Preference-weighted version of ``T`` for θ-family games.

    ``S[m, n] = (sum_k W_m^k / sum_k W_n^k) * max_k |F_mn^k| W_n^k / W_m^k``.
    With θ = -1 every weight is equal and ``S == T``.
    """
    build_t_max(game.coupling)  # raises for other couplings
    W = preference_matrix(game)
    tot = W.sum(axis=1)
    F = np.abs(game.coupling.F)
    ratio = W[None, :, :] / W[:, None, :]          # [m, n, k] = W_n^k / W_m^k
    S = (tot[:, None] / tot[None, :]) * (F * ratio).max(axis=2)
    np.fill_diagonal(S, 0.0)
    return S


def weighted_contraction_matrix(game):
    """Modulus of the best-response map in the preference-weighted norms.

    ``Q[m, n] = max_k |F_mn^k| * sqrt(w_n^k / w_m^k)`` with normalised
    weights ``w``. For every pair of profiles
    ``||BR_n(a) - BR_n(b)||_{w_n} <= sum_m Q[m, n] ||a_m - b_m||_{w_m}``.
    """
    build_t_max(game.coupling)
    W = preference_matrix(game)
    w = W / W.sum(axis=1, keepdims=True)
    F = np.abs(game.coupling.F)
    Q = (F * np.sqrt(w[None, :, :] / w[:, None, :])).max(axis=2)
    np.fill_diagonal(Q, 0.0)
    return Q


def sample_profiles(game, n_samples=DEFAULT_SUP_SAMPLES, seed=0):
    """Quasi-random feasible profiles plus per-player vertex substitutions.

    Each player's coordinates come from a scrambled Sobol point mapped into
    the box tightened by the budget and projected onto the action set.
    Then, for every player ``m`` and vertex ``v`` of its action set, ``v``
    replaces ``a_m`` in a handful of the sampled profiles, so suprema that
    sit on a corner of ``A_m`` are hit exactly.
    """
    N, K = game.N, game.K
    n_pts = max(int(n_samples), 1)
    sob = qmc.Sobol(d=N * K, scramble=True, seed=seed)
    m = int(np.ceil(np.log2(n_pts)))
    U = sob.random_base2(m)[:n_pts].reshape(n_pts, N, K)
    lo = game.lower
    eff = np.array([s.effective_upper() for s in game.sets])
    span = np.where(np.isfinite(eff - lo), eff - lo, 1.0)
    P = lo[None] + U * span[None]
    for i in range(n_pts):
        for n, s in enumerate(game.sets):
            if P[i, n].sum() > s.budget:
                P[i, n] = project(P[i, n], None, s)
    extra = []
    base = P[: min(16, n_pts)]
    for mm, s in enumerate(game.sets):
        try:
            verts = s.vertices()
        except UnsupportedError:
            continue
        for v in verts:
            if not np.all(np.isfinite(v)):
                continue
            Q = base.copy()
            Q[:, mm] = v
            extra.append(Q)
    if extra:
        P = np.concatenate([P] + extra, axis=0)
    return P


def _jacobian_sup(game, n_samples, seed):
    """Element-wise sup of |d f_n^k / d a_m^j| and the sign pattern seen."""
    aff = affine_form(game.coupling)
    if aff is not None:
        G = aff.G
        return np.abs(G), True, G.min(), G.max()
    sup = None
    gmin, gmax = np.inf, -np.inf
    for a in sample_profiles(game, n_samples, seed):
        G = game.coupling.jacobian(a)
        gmin, gmax = min(gmin, G.min()), max(gmax, G.max())
        A = np.abs(G)
        sup = A if sup is None else np.maximum(sup, A)
    return sup, False, gmin, gmax


def build_t_bar_max(game, sup_samples=DEFAULT_SUP_SAMPLES, seed=0):
    """``T_bar[m, n] = sup_a max_j sum_k |d f_n^k / d a_m^j|``.

    Exact for linear and affine couplings; for nonlinear couplings the
    sup is taken over sampled feasible profiles and ``certified`` is False.

    Returns
    -------
    (ndarray, bool)
    """
    aff = affine_form(game.coupling)
    if aff is not None:
        T = np.abs(aff.G).sum(axis=2).max(axis=2)
        np.fill_diagonal(T, 0.0)
        return T, True
    if not hasattr(game.coupling, "jacobian_fn"):
        raise UnsupportedError("coupling has no jacobian")
    T = None
    for a in sample_profiles(game, sup_samples, seed):
        G = np.abs(game.coupling.jacobian(a)).sum(axis=2).max(axis=2)
        T = G if T is None else np.maximum(T, G)
    np.fill_diagonal(T, 0.0)
    return T, False


def build_s_bar_max(game, sup_samples=DEFAULT_SUP_SAMPLES, seed=0):
    """Preference-weighted ``T_bar`` for θ-family kernels.

    ``S_bar[m, n] = (sum_k W_m^k / sum_k W_n^k)
    * sup_a max_j sum_k |d f_n^k / d a_m^j| W_n^j / W_m^j``.
    """
    W = preference_matrix(game)
    tot = W.sum(axis=1)
    ratio = W[None, :, :] / W[:, None, :]  # [m, n, j]

    def weighted(G):
        return (np.abs(G).sum(axis=2) * ratio).max(axis=2)

    aff = affine_form(game.coupling)
    if aff is not None:
        inner, cert = weighted(aff.G), True
    else:
        inner = None
        for a in sample_profiles(game, sup_samples, seed):
            v = weighted(game.coupling.jacobian(a))
            inner = v if inner is None else np.maximum(inner, v)
        cert = False
    S = (tot[:, None] / tot[None, :]) * inner
    np.fill_diagonal(S, 0.0)
    return S, cert


def zeta_bound(game):
    """Largest preference dissimilarity ``max_{m != n} max_k r / min_k r``.

    ``r_k = (F_nn^k / F_mm^k)**(1+1/theta)``. Equal to 1 when θ = -1 or
    when all players share the same ``F_nn``.
    """
    th = _require_theta(game)
    F = game.table.f_self
    N = game.N
    if N < 2:
        return 1.0
    r = (F[None, :, :] / F[:, None, :]) ** (1.0 + 1.0 / th)  # [m, n, k]
    z = r.max(axis=2) / r.min(axis=2)
    mask = ~np.eye(N, dtype=bool)
    return float(max(z[mask].max(), 1.0))


def jackson_class_bound(exit_prob):
    """Bound ``1/r - 1`` on the per-class coupling radius of a routing network
    in which every node exits with probability ``r``."""
    r = float(exit_prob)
    if not r > 0 or r > 1:
        raise ValueError("exit probability must lie in (0, 1]")
    return 1.0 / r - 1.0


# ---------------------------------------------------------------------------
# curvature and Lipschitz constants
# ---------------------------------------------------------------------------

@dataclass
class CurvatureReport:
    inf_h2: float
    sup_h2: float
    penalty_lipschitz: float
    total_L: float
    certified: bool
    inf_h2_grid: np.ndarray = field(repr=False, default=None)
    sup_h2_grid: np.ndarray = field(repr=False, default=None)
    offending: tuple | None = None

    @property
    def finite(self):
        return bool(np.isfinite(self.inf_h2) and np.isfinite(self.total_L))


def coupling_ranges(game):
    """Element-wise min and max of ``f_n^k`` over the joint action set (affine only)."""
    aff = affine_form(game.coupling)
    if aff is None:
        raise UnsupportedError("exact coupling ranges need a linear or affine coupling")
    G = aff.G                                       # [m, n, k, j]
    lo = game.lower[:, None, None, :]
    hi = np.array([s.effective_upper() for s in game.sets])[:, None, None, :]
    with np.errstate(invalid="ignore"):
        low = np.where(G > 0, G * lo, np.where(G < 0, G * hi, 0.0))
        high = np.where(G > 0, G * hi, np.where(G < 0, G * lo, 0.0))
    return low.sum(axis=(0, 3)), high.sum(axis=(0, 3))


def _theta_h2_range(game, zlo_x, zhi_x):
    """Exact h'' range of θ-family kernels over argument intervals."""
    t = game.table
    z_lo = t.alpha + t.f_self * zlo_x
    z_hi = t.alpha + t.f_self * zhi_x
    coef = t.scale * t.theta * t.f_self ** 2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inf2 = np.where(z_lo > 0, coef * z_lo ** (t.theta - 1), -np.inf)
        sup2 = np.where(np.isfinite(z_hi), coef * z_hi ** (t.theta - 1), 0.0)
    return inf2, sup2


def curvature_and_lipschitz(game, sup_samples=DEFAULT_SUP_SAMPLES, seed=0):
    """Curvature bounds of all kernels and the sum-utility Lipschitz constant.

    ``L = sup|h''| * max_row(A A^T 1) + N K L'`` where ``A[(m, j), (n, k)]``
    is ``|d x_n^k / d a_m^j|`` for kernel arguments ``x = a + f`` and ``L'``
    bounds the Lipschitz constant of every penalty gradient. For a
    per-dimension coupling the row term is
    ``max_{k, l} sum_m sum_n |F_mn^k F_ln^k|`` with ``F_nn = 1``.
    """
    N, K = game.N, game.K
    aff = affine_form(game.coupling)
    certified = aff is not None and game.table.theta_family
    eff = np.array([s.effective_upper() for s in game.sets])
    if aff is not None:
        flo, fhi = coupling_ranges(game)
        xlo, xhi = game.lower + flo, eff + fhi
    if certified:
        inf2, sup2 = _theta_h2_range(game, xlo, xhi)
        absmax = -inf2
    else:
        P = sample_profiles(game, sup_samples, seed)
        X = P + np.array([game.coupling.value(a) for a in P])
        h2 = np.array([game.table.d2(x) for x in X])
        h2 = np.where(np.isfinite(h2), h2, -np.inf)
        inf2, sup2 = h2.min(axis=0), h2.max(axis=0)
        absmax = -inf2
    inf_all = float(inf2.min())
    sup_all = float(sup2.max())
    offending = None
    if not np.isfinite(inf_all):
        idx = np.unravel_index(int(np.argmin(inf2)), inf2.shape)
        offending = tuple(int(i) for i in idx)
    # |d x / d a| structure
    if aff is not None:
        Gabs = np.abs(aff.G).copy()
    else:
        Gabs = _jacobian_sup(game, sup_samples, seed)[0].copy()
    idx = np.arange(N)
    Gabs[idx, idx] = np.eye(K)[None]
    A = Gabs.transpose(0, 3, 1, 2).reshape(N * K, N * K)  # rows (m, j), cols (n, k)
    row_term = float((A @ (A.T @ np.ones(N * K))).max())
    Lp, lp_cert = penalty_lipschitz(game, sup_samples, seed)
    certified = certified and lp_cert
    sup_abs = float(np.max(absmax)) if absmax.size else 0.0
    total = sup_abs * row_term + N * K * Lp if np.isfinite(sup_abs) else np.inf
    return CurvatureReport(inf_h2=inf_all, sup_h2=sup_all, penalty_lipschitz=Lp,
                           total_L=float(total), certified=bool(certified),
                           inf_h2_grid=inf2, sup_h2_grid=sup2, offending=offending)


def penalty_lipschitz(game, sup_samples=DEFAULT_SUP_SAMPLES, seed=0):
    """Bound on the Lipschitz constant of each penalty gradient.

    Returns ``(L', certified)``.
    """
    kind = game.penalty.kind
    if kind == "zero":
        return 0.0, True
    if kind == "kernel-of-coupling":
        aff = affine_form(game.coupling)
        if aff is None or not game.table.theta_family:
            return _sampled_penalty_lipschitz(game, sup_samples, seed), False
        flo, fhi = coupling_ranges(game)
        inf2, _ = _theta_h2_range(game, flo, fhi)
        # Hessian of h(f(a)) is h''(f) g g^T with g the coefficient vector of f_n^k
        gsq = (aff.G ** 2).sum(axis=(0, 3))        # [n, k]
        return float(np.max(np.abs(inf2) * gsq)), True
    declared = getattr(game.penalty, "lipschitz", None)
    if declared is not None:
        return float(declared), True
    return _sampled_penalty_lipschitz(game, sup_samples, seed), False


def _sampled_penalty_lipschitz(game, n_samples, seed):
    rng = np.random.default_rng(seed)
    P = sample_profiles(game, min(n_samples, 256), seed)
    best = 0.0
    for i in range(len(P) - 1):
        a, b = P[i], P[i + 1] + 1e-3 * rng.standard_normal(P[i].shape)
        b = np.array([project(b[n], None, s) for n, s in enumerate(game.sets)])
        ga, gb = game.penalty.gradient(game, a), game.penalty.gradient(game, b)
        dist = np.linalg.norm(a - b)
        if dist > 0:
            # per (n, k) gradient over all coordinates
            diff = np.sqrt(((ga - gb) ** 2).sum(axis=(0, 3)))
            best = max(best, float(diff.max()) / dist)
    return best


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

CONDITIONS = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8")


@dataclass
class ConditionReport:
    t_max: np.ndarray | None
    s_max: np.ndarray | None
    t_bar_max: np.ndarray | None
    s_bar_max: np.ndarray | None
    rho: dict
    sign_structure: str
    theta_family: bool
    zeta_max: float | None
    holds: dict
    bound_certified: bool
    curvature: CurvatureReport | None = None

    def any_holds(self, which=CONDITIONS):
        return any(self.holds.get(c) is Status.HOLDS for c in which)

    def best_response_certified(self):
        return self.any_holds(CONDITIONS[:6])

    def summary_lines(self):
        out = [f"sign structure: {self.sign_structure}",
               f"theta family: {self.theta_family}",
               f"bounds certified: {self.bound_certified}"]
        if self.zeta_max is not None:
            out.append(f"zeta max: {self.zeta_max:.17g}")
        for k, v in self.rho.items():
            out.append(f"rho({k}) = {v:.17g}")
        if self.curvature is not None:
            c = self.curvature
            out += [f"inf h'' = {c.inf_h2:.17g}", f"sup h'' = {c.sup_h2:.17g}",
                    f"penalty Lipschitz = {c.penalty_lipschitz:.17g}",
                    f"sum-utility Lipschitz L = {c.total_L:.17g}"]
            if c.offending is not None:
                out.append(f"unbounded curvature at (n, k) = {c.offending}")
        for c in CONDITIONS:
            out.append(f"{c}: {self.holds[c]}")
        return out


def sign_structure(game, sup_samples=DEFAULT_SUP_SAMPLES, seed=0):
    """'substitutes' if all coupling derivatives are >= 0, 'complements' if
    all are <= 0, otherwise 'mixed'. Returns ``(label, certified)``."""
    _, cert, gmin, gmax = _jacobian_sup(game, sup_samples, seed)
    N = game.N
    aff = affine_form(game.coupling)
    if aff is not None:
        mask = ~np.eye(N, dtype=bool)
        G = aff.G[mask]
        gmin, gmax = (G.min(), G.max()) if G.size else (0.0, 0.0)
    if gmin >= 0:
        return "substitutes", cert
    if gmax <= 0:
        return "complements", cert
    return "mixed", cert


def check_conditions(game, sup_samples=DEFAULT_SUP_SAMPLES, seed=0, pricing=True):
    """Evaluate every applicable convergence certificate.

    Parameters
    ----------
    game : GameSpec
    sup_samples : int
        Sample count for suprema over nonlinear couplings.
    pricing : bool
        Also evaluate the curvature conditions of the pricing algorithms.

    Returns
    -------
    ConditionReport
    """
    kind = game.coupling.kind
    theta = game.table.common_theta() is not None
    sign, sign_cert = sign_structure(game, sup_samples, seed)
    uniform = sign != "mixed"
    rho = {}
    T = S = None
    if kind == "per-dimension-linear":
        T = build_t_max(game.coupling)
        rho["T"] = spectral_radius(T)
        if theta:
            S = build_s_max(game)
            rho["S"] = spectral_radius(S)
    Tb, cert = build_t_bar_max(game, sup_samples, seed)
    rho["T_bar"] = spectral_radius(Tb)
    Sb = None
    if theta:
        Sb, _ = build_s_bar_max(game, sup_samples, seed)
        rho["S_bar"] = spectral_radius(Sb)
    linear = T is not None
    holds = {
        "C1": _status(linear, linear and rho["T"] < 0.5),
        "C2": _status(linear and uniform, linear and rho["T"] < 1),
        "C3": _status(linear and theta, S is not None and rho["S"] < 1),
        "C4": _status(True, rho["T_bar"] < 0.5),
        "C5": _status(uniform, rho["T_bar"] < 1),
        "C6": _status(theta, Sb is not None and rho["S_bar"] < 1),
    }
    curv = None
    affine_like = affine_form(game.coupling) is not None
    if pricing and affine_like:
        curv = curvature_and_lipschitz(game, sup_samples, seed)
        bounded = curv.finite and np.isfinite(curv.penalty_lipschitz)
        holds["C7"] = _status(True, bounded)
        holds["C8"] = _status(True, bounded and curv.sup_h2 < 0)
    else:
        holds["C7"] = holds["C8"] = Status.NOT_APPLICABLE
    return ConditionReport(
        t_max=T, s_max=S, t_bar_max=Tb, s_bar_max=Sb, rho=rho,
        sign_structure=sign, theta_family=theta,
        zeta_max=zeta_bound(game) if theta else None,
        holds=holds, bound_certified=bool(cert and sign_cert),
        curvature=curv)
