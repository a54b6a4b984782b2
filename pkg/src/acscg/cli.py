"""
Command-line interface.

::

    acscg check       --game catalog:power-control:N=3,K=4
    acscg run-br      --game game.json --schedule parallel --out traj.csv
    acscg run-pricing --game catalog:jackson --algo jacobi --kappa 0.2
    acscg sweep       --grid 0.40:0.70:0.05 --instances 200 --out sweep.csv
    acscg compare     --game catalog:jackson --mode schedules

Exit codes: 0 success, 1 error, 2 ``check`` found no certificate.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import catalog
from .best_response import DynamicsConfig, run_dynamics
from .conditions import check_conditions
from .experiments import (compare_pricing, compare_schedules, endpoint_spread, jackson_sweep,
                          random_inits, sweep_grid, write_sweep, write_trajectories)
from .gamefile import GameFileError, load_game
from .model import (DomainError, InfeasibleError, NoCertificateError, NumericError,
                    UnsupportedError)
from .pricing import ALGORITHMS, run_pricing

EXIT_OK, EXIT_ERROR, EXIT_NO_CERTIFICATE = 0, 1, 2


class UsageError(ValueError):
    pass


def _parse_value(v):
    low = v.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def _catalog_game(name, params, seed):
    p = dict(params)

    def take(key, default):
        return p.pop(key, default)

    if name == "example1":
        game = catalog.make_example1(float(take("M1", 2 / 3)), float(take("M2", 1.0)))
    elif name in ("power-control", "ici"):
        spec = catalog.random_power_spec(int(take("N", 3)), int(take("K", 4)),
                                         seed=int(take("seed", seed)),
                                         cross=float(take("cross", 0.2)),
                                         ici_window=take("window", None))
        game = catalog.make_power_control(spec) if name == "power-control" else catalog.make_ici(spec)
    elif name == "jackson":
        exit_prob = take("exit", None)
        routing = take("routing", None)
        if exit_prob is None:
            exit_prob = 1.0 - float(routing) if routing is not None else 0.5
        spec = catalog.random_jackson(int(take("N", 5)), int(take("K", 3)), float(exit_prob),
                                      seed=int(take("seed", seed)),
                                      self_routing=bool(take("self_routing", True)),
                                      cap_fraction=float(take("cap_fraction", 0.95)))
        game = catalog.make_jackson(spec)
    elif name == "zero":
        game = catalog.zero_coupling_game(int(take("N", 2)), int(take("K", 2)),
                                          float(take("theta", -1.0)), float(take("budget", 1.0)))
    elif name == "theta":
        game = catalog.random_theta_game(int(take("N", 3)), int(take("K", 3)),
                                         float(take("theta", -1.0)),
                                         seed=int(take("seed", seed)),
                                         coupling=float(take("coupling", 0.1)),
                                         sign=str(take("sign", "mixed")))
    else:
        raise UsageError(f"unknown catalog game {name!r}; choose from {CATALOG_NAMES}")
    if p:
        raise UsageError(f"unknown parameters for {name}: {', '.join(sorted(p))}")
    return game


CATALOG_NAMES = ("example1", "power-control", "ici", "jackson", "zero", "theta")


def resolve_game(source, seed=0):
    """Load ``catalog:name[:k=v,...]`` or a JSON game file."""
    if source.startswith("catalog:"):
        parts = source.split(":", 2)
        name = parts[1]
        params = {}
        if len(parts) == 3 and parts[2]:
            for item in parts[2].split(","):
                if "=" not in item:
                    raise UsageError(f"catalog parameter {item!r} is not of the form key=value")
                k, v = item.split("=", 1)
                params[k.strip()] = _parse_value(v.strip())
        return _catalog_game(name, params, seed)
    try:
        return load_game(source)
    except FileNotFoundError as err:
        raise UsageError(f"game file not found: {source}") from err


def parse_grid(text):
    """``start:stop:step`` or a comma-separated list of routing probabilities."""
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError as err:
            raise UsageError(f"grid {text!r} must be start:stop:step") from err
        if step <= 0 or stop < start:
            raise UsageError("grid needs step > 0 and stop >= start")
        grid = sweep_grid(start, stop, step)
    else:
        grid = [float(x) for x in text.split(",") if x.strip()]
    if not grid:
        raise UsageError("sweep grid is empty")
    if any(not 0 <= q < 1 for q in grid):
        raise UsageError("routing probabilities must lie in [0, 1)")
    return grid


def _config(args, schedule=None):
    return DynamicsConfig(schedule=schedule or args.schedule, tol=args.tol,
                          max_iter=args.max_iter, seed=args.seed)


def _emit(text):
    if text is not None:
        sys.stdout.write(text)


def _log(msg):
    print(msg, file=sys.stderr)


def _fmt_matrix(name, M):
    rows = [" ".join(f"{v:.17g}" for v in row) for row in np.atleast_2d(M)]
    return [f"{name} =", *("  " + r for r in rows)]


def cmd_check(args):
    game = resolve_game(args.game, args.seed)
    rep = check_conditions(game, seed=args.seed)
    lines = []
    for name, M in (("T_max", rep.t_max), ("S_max", rep.s_max),
                    ("T_bar_max", rep.t_bar_max), ("S_bar_max", rep.s_bar_max)):
        if M is not None:
            lines += _fmt_matrix(name, M)
    lines += rep.summary_lines()
    lines.append(f"certified: {rep.any_holds()}")
    print("\n".join(lines))
    return EXIT_OK if rep.any_holds() else EXIT_NO_CERTIFICATE


def _report_runs(label, trajs):
    for i, t in enumerate(trajs):
        _log(f"{label} run {i}: converged={t.converged} iterations={t.iterations} "
             f"sum_utility={t.utilities[-1].sum():.17g}")


def cmd_run_br(args):
    game = resolve_game(args.game, args.seed)
    inits = random_inits(game, args.inits, args.seed)
    trajs = [run_dynamics(game, a0, _config(args)) for a0 in inits]
    _report_runs(args.schedule, trajs)
    if len(trajs) > 1:
        _log(f"endpoint spread: {endpoint_spread(trajs):.3g}")
    _emit(write_trajectories(trajs, args.out))
    return EXIT_OK


def cmd_run_pricing(args):
    game = resolve_game(args.game, args.seed)
    kappa = args.kappa
    if not kappa > 0:
        raise UsageError("kappa must be positive")
    inits = random_inits(game, args.inits, args.seed)
    trajs = [run_pricing(game, a0, args.algo, kappa, _config(args, "parallel")) for a0 in inits]
    _report_runs(args.algo, trajs)
    _emit(write_trajectories(trajs, args.out))
    return EXIT_OK


def cmd_sweep(args):
    grid = parse_grid(args.grid)
    if args.instances < 1:
        raise UsageError("instances must be at least 1")
    pts = jackson_sweep(grid, instances=args.instances, N=args.players, K=args.dims,
                        seed=args.seed, self_routing=not args.no_self_routing,
                        workers=args.workers)
    _emit(write_sweep(pts, args.out))
    return EXIT_OK


def cmd_compare(args):
    game = resolve_game(args.game, args.seed)
    a0 = random_inits(game, 1, args.seed)[0]
    if args.mode == "schedules":
        runs = compare_schedules(game, a0, _config(args))
    else:
        if not args.kappa > 0:
            raise UsageError("kappa must be positive")
        runs = compare_pricing(game, a0, args.kappa, _config(args))
    labels = list(runs)
    trajs = [runs[k] for k in labels]
    _report_runs(args.mode, trajs)
    _log(f"endpoint spread: {endpoint_spread(trajs):.3g} ({' vs '.join(labels)})")
    _emit(write_trajectories(trajs, args.out, labels=labels))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="acscg", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, game=True):
        if game:
            sp.add_argument("--game", required=True,
                            help="JSON game file or catalog:name[:key=value,...]")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=1e-8)
        sp.add_argument("--max-iter", type=int, default=10_000)
        sp.add_argument("--schedule", choices=("sequential", "parallel"), default="sequential")
        sp.add_argument("--out", default=None, help="output CSV path (default: stdout)")

    common(sub.add_parser("check", help="evaluate convergence certificates"))
    sp = sub.add_parser("run-br", help="best-response dynamics")
    common(sp)
    sp.add_argument("--inits", type=int, default=1, help="number of random starting profiles")
    sp = sub.add_parser("run-pricing", help="gradient play, Jacobi or unpriced gradient play")
    common(sp)
    sp.add_argument("--algo", choices=ALGORITHMS, default="jacobi")
    sp.add_argument("--kappa", type=float, default=0.2)
    sp.add_argument("--inits", type=int, default=1)
    sp = sub.add_parser("sweep", help="certificate frequency over random Jackson networks")
    common(sp, game=False)
    sp.add_argument("--grid", default="0.40:0.70:0.05", help="routing probabilities 1 - exit")
    sp.add_argument("--instances", type=int, default=200)
    sp.add_argument("--players", type=int, default=5)
    sp.add_argument("--dims", type=int, default=3)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--no-self-routing", action="store_true")
    sp = sub.add_parser("compare", help="sequential vs parallel, or gradient play vs Jacobi")
    common(sp)
    sp.add_argument("--mode", choices=("schedules", "pricing"), default="schedules")
    sp.add_argument("--kappa", type=float, default=0.2)
    return p


COMMANDS = {"check": cmd_check, "run-br": cmd_run_br, "run-pricing": cmd_run_pricing,
            "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. ``| head``)
        sys.stderr.close()
        return EXIT_OK
    except NoCertificateError as err:
        _log(f"error: {err}")
        return EXIT_NO_CERTIFICATE
    except (UsageError, GameFileError, DomainError, InfeasibleError, NumericError,
            UnsupportedError, catalog.GenerationError, ValueError, OSError) as err:
        _log(f"error: {err}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
