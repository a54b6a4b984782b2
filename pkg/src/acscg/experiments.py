"""
Experiment drivers and CSV output.

All floats are written with ``%.17g`` so files round-trip exactly and are
byte-identical across runs with the same seed.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .best_response import DynamicsConfig, run_dynamics
from .catalog import GenerationError, make_jackson, make_rng, random_jackson
from .conditions import Status, check_conditions
from .model import random_feasible_profile
from .pricing import run_pricing

FLOAT_FMT = "%.17g"


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % float(x)
    return str(x)


def write_rows(rows, header, out):
    """Write ``rows`` as CSV to a path, a text stream, or return a string when None."""
    buf = io.StringIO() if out is None else None
    fh = buf if buf is not None else (open(out, "w", newline="") if isinstance(out, str) else out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    finally:
        if isinstance(out, str):
            fh.close()
    return buf.getvalue() if buf is not None else None


def trajectory_header(K):
    return (["run", "stage", "player"] + [f"a{k}" for k in range(K)]
            + ["utility", "residual", "multiplier", "sum_utility",
               "stationarity", "complementarity", "feasibility"])


def trajectory_rows(traj, run=0):
    """One row per stage and player; KKT columns are empty for best-response runs."""
    T1, N, K = traj.profiles.shape
    su = traj.extra.get("sum_utility", traj.utilities.sum(axis=1))
    kkt = [traj.extra.get(k) for k in ("stationarity", "complementarity", "feasibility")]
    for t in range(T1):
        for n in range(N):
            row = [run, t, n] + list(traj.profiles[t, n]) + [
                traj.utilities[t, n], traj.residual_1norm[t, n], traj.multipliers[t, n], su[t]]
            row += ["" if v is None else v[t] for v in kkt]
            yield row


def write_trajectories(trajs, out=None, labels=None):
    K = trajs[0].profiles.shape[2]
    rows = []
    for i, tr in enumerate(trajs):
        rows.extend(trajectory_rows(tr, run=i if labels is None else labels[i]))
    return write_rows(rows, trajectory_header(K), out)


# ---------------------------------------------------------------------------
# threshold sweep over routing probability
# ---------------------------------------------------------------------------

@dataclass
class SweepPoint:
    routing_prob: float
    instances: int
    generated: int
    c2: float
    c3: float
    failures: int


def _sweep_instance(args):
    N, K, exit_prob, seed, self_routing = args
    try:
        spec = random_jackson(N, K, exit_prob, seed=seed, self_routing=self_routing)
    except GenerationError:
        return None
    rep = check_conditions(make_jackson(spec), pricing=False)
    return rep.holds["C2"] is Status.HOLDS, rep.holds["C3"] is Status.HOLDS


def sweep_grid(start=0.40, stop=0.70, step=0.05):
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def jackson_sweep(grid=None, instances=200, N=5, K=3, seed=0, self_routing=True, workers=1):
    """Fraction of random networks certified by C2 and C3 per routing probability.

    Instance ``i`` at grid point ``p`` is drawn from the stream
    ``(seed, p, i)``, so results do not depend on ``workers``.
    """
    grid = sweep_grid() if grid is None else list(grid)
    jobs = [(N, K, round(1.0 - q, 12), (seed, p, i), self_routing)
            for p, q in enumerate(grid) for i in range(instances)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_instance, jobs, chunksize=32))
    else:
        results = [_sweep_instance(j) for j in jobs]
    out = []
    for p, q in enumerate(grid):
        chunk = results[p * instances:(p + 1) * instances]
        ok = [r for r in chunk if r is not None]
        g = len(ok)
        out.append(SweepPoint(
            routing_prob=q, instances=instances, generated=g,
            c2=sum(r[0] for r in ok) / g if g else float("nan"),
            c3=sum(r[1] for r in ok) / g if g else float("nan"),
            failures=instances - g))
    return out


def write_sweep(points, out=None):
    rows = [(p.routing_prob, 1.0 - p.routing_prob, p.c2, p.c3, p.generated, p.failures)
            for p in points]
    return write_rows(rows, ["routing_prob", "exit_prob", "frac_c2", "frac_c3",
                             "generated", "failures"], out)


# ---------------------------------------------------------------------------
# comparisons
# ---------------------------------------------------------------------------

def random_inits(game, count, seed):
    rng = make_rng((seed, 1))
    return [random_feasible_profile(game, rng, interior=True) for _ in range(count)]


def compare_schedules(game, init, config):
    """Sequential and parallel best-response runs from the same start."""
    out = {}
    for sched in ("sequential", "parallel"):
        cfg = DynamicsConfig(schedule=sched, tol=config.tol, max_iter=config.max_iter,
                             seed=config.seed)
        out[sched] = run_dynamics(game, init, cfg)
    return out


def compare_pricing(game, init, kappa, config):
    """Gradient play and the Jacobi update with the same step size."""
    cfg = DynamicsConfig(schedule="parallel", tol=config.tol, max_iter=config.max_iter,
                         seed=config.seed)
    return {alg: run_pricing(game, init, alg, kappa, cfg)
            for alg in ("gradient-play", "jacobi")}


def endpoint_spread(trajs):
    """Largest pairwise max-abs distance between final profiles."""
    ends = [t.final for t in trajs]
    best = 0.0
    for i in range(len(ends)):
        for j in range(i + 1, len(ends)):
            best = max(best, float(np.max(np.abs(ends[i] - ends[j]))))
    return best
