"""
Weighted Euclidean projection onto a box intersected with a budget half-space.

The projection of ``p`` under weights ``w`` solves

    min_x  sum_k w_k (x_k - p_k)**2   s.t.  lower <= x <= upper,  sum(x) <= M.

If clamping ``p`` into the box already satisfies the budget that clamp is
the answer. Otherwise the budget binds and the solution has the form
``x_k = clamp(p_k + lam / w_k)`` for a single multiplier ``lam`` chosen so
that ``sum(x) = M``.
"""

import numpy as np

from .model import InfeasibleError, NumericError, SumConstrainedSet

MAX_DOUBLINGS = 128


def _budget_tol(budget, tol):
    return tol * max(1.0, abs(budget)) if tol is not None else 1e-12 * max(1.0, abs(budget))


def _clamped(point, weights, lam, lo, hi):
    return np.clip(point + lam / weights, lo, hi)


def budget_multiplier(point, weights, aset, tol=None):
    """Multiplier ``lam`` with ``sum(clamp(point + lam / w)) == budget``.

    The clamped sum is non-decreasing in ``lam``. Where it is flat at the
    budget the smallest such ``lam`` is returned.

    Parameters
    ----------
    point : array_like
        Centre of the projection.
    weights : array_like
        Positive weights, one per coordinate.
    aset : SumConstrainedSet
    tol : float, optional
        Relative budget tolerance, defaults to ``1e-12``.

    Returns
    -------
    float
    """
    p = np.asarray(point, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    lo, hi, M = aset.lower, aset.upper, aset.budget
    if lo.sum() > M + _budget_tol(M, tol):
        raise InfeasibleError(
            f"sum of lower bounds {lo.sum():.6g} exceeds budget {M:.6g}")
    if hi.sum() < M - _budget_tol(M, tol):
        raise InfeasibleError(
            f"sum of upper bounds {hi.sum():.6g} is below budget {M:.6g}; "
            "the budget face is empty")
    btol = _budget_tol(M, tol)

    def excess(lam):
        return _clamped(p, w, lam, lo, hi).sum() - M

    # bracket: excess(a) < 0 <= excess(b)
    a, b = -1.0, 1.0
    for _ in range(MAX_DOUBLINGS):
        if excess(b) >= -btol:
            break
        a, b = b, 2 * b
    else:
        raise NumericError(f"no upper bracket for the budget multiplier (last {b:.3g})")
    for _ in range(MAX_DOUBLINGS):
        if excess(a) < -btol:
            break
        b = a
        a *= 2
    else:
        # lower bounds already exhaust the budget: report the level where all clamp low
        return float(np.max(w * (lo - p)))

    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if excess(mid) >= -btol:
            b = mid
        else:
            a = mid
        if b - a <= 1e-15 * max(1.0, abs(b)):
            break
    return _refit(p, w, b, lo, hi, M, bracket=(a, b))


def _refit(p, w, lam, lo, hi, M, bracket=None):
    """Solve the budget equation exactly on the free set found at ``lam``."""
    raw = p + lam / w
    free = (raw > lo) & (raw < hi)
    if not free.any():
        return float(lam)
    fixed = np.where(raw <= lo, lo, hi)
    rest = M - fixed[~free].sum() - p[free].sum()
    exact = rest / (1.0 / w[free]).sum()
    if bracket is not None:
        a, b = bracket
        slack = 1e-9 * max(1.0, abs(a), abs(b))
        if not (a - slack <= exact <= b + slack):
            return float(lam)
    return float(exact)


def project(point, weights, aset, tol=None):
    """Weighted Euclidean projection of ``point`` onto ``aset``.

    Parameters
    ----------
    point : array_like
    weights : array_like or None
        Positive weights; None means unit weights.
    aset : SumConstrainedSet
    tol : float, optional
        Relative budget tolerance.

    Returns
    -------
    ndarray
        The projected point, feasible to within the tolerance.

    Examples
    --------
    >>> s = SumConstrainedSet([0, 0], [1, 1], 1.0)
    >>> project([1.0, 1.0], None, s)
    array([0.5, 0.5])
    """
    p = np.asarray(point, dtype=float)
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=float)
    lo, hi, M = aset.lower, aset.upper, aset.budget
    if lo.sum() > M + _budget_tol(M, tol):
        raise InfeasibleError(
            f"empty action set: sum of lower bounds {lo.sum():.6g} exceeds budget {M:.6g}")
    x = np.clip(p, lo, hi)
    if x.sum() <= M + _budget_tol(M, tol):
        return x
    lam = budget_multiplier(p, w, aset, tol)
    x = _clamped(p, w, lam, lo, hi)
    # absorb the last rounding error on the free coordinates
    free = (x > lo) & (x < hi)
    if free.any():
        x[free] += (M - x.sum()) * (1.0 / w[free]) / (1.0 / w[free]).sum()
        x = np.clip(x, lo, hi)
    return x


def preference_weights(f_self, theta):
    """Preference weights ``F**(1+1/theta)`` normalised to sum to one.

    These are the weights under which a θ-family best response is
    itself a weighted projection.
    """
    F = np.asarray(f_self, dtype=float)
    v = F ** (1.0 + 1.0 / theta)
    return v / v.sum()


def w_norm(x, w):
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.sum(np.asarray(w) * x * x)))


__all__ = ["project", "budget_multiplier", "preference_weights", "w_norm",
           "SumConstrainedSet"]
