"""Independent reference implementations used by the tests."""

import itertools

import numpy as np


def brute_force_projection(point, weights, lower, upper, budget):
    """Weighted projection onto ``{lo <= x <= hi, sum x <= M}`` by enumerating
    every lower/upper/free pattern of the budget face."""
    p = np.asarray(point, float)
    w = np.ones_like(p) if weights is None else np.asarray(weights, float)
    lo, hi = np.asarray(lower, float), np.asarray(upper, float)
    clipped = np.clip(p, lo, hi)
    if clipped.sum() <= budget + 1e-12:
        return clipped
    best, best_obj = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=p.size):
        pat = np.array(pattern)
        x = np.where(pat == 0, lo, np.where(pat == 1, hi, np.nan))
        free = pat == 2
        if np.any(~np.isfinite(x[~free])):
            continue
        rest = budget - x[~free].sum()
        if free.any():
            # x_free = p - nu / w with one multiplier nu
            nu = (p[free].sum() - rest) / (1.0 / w[free]).sum()
            x[free] = p[free] - nu / w[free]
        elif abs(rest) > 1e-9:
            continue
        if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
            continue
        obj = float(np.sum(w * (x - p) ** 2))
        if obj < best_obj:
            best, best_obj = x, obj
    return best


def central_difference(fn, x, step=1e-6):
    """Jacobian of ``fn`` w.r.t. every entry of ``x`` by central differences."""
    x = np.asarray(x, float)
    f0 = np.asarray(fn(x))
    J = np.zeros(x.shape + f0.shape)
    for idx in np.ndindex(x.shape):
        h = step * max(1.0, abs(x[idx]))
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        J[idx] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2 * h)
    return J


def charpoly_radius(A):
    """Largest root modulus of the characteristic polynomial."""
    return float(np.max(np.abs(np.roots(np.poly(np.asarray(A, float))))))
