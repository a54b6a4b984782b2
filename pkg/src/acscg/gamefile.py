"""
JSON game documents.

A document is a single object::

    {"format": "acscg-game", "version": 1, "N": 2, "K": 2,
     "sets": [{"lower": [...], "upper": [...], "budget": 1.0}, ...],
     "kernels": [[{"type": "theta", "theta": -1, "alpha": 1, "f_self": 1, "scale": 1}, ...], ...],
     "coupling": {"type": "per-dimension-linear", "F": [[[...]]]},
     "penalty": {"type": "zero"},
     "metadata": {}}

Kernel types: ``theta``, ``neg-exp``. Coupling types:
``per-dimension-linear`` (``F[m][n][k]``), ``affine`` (``G[m][n][k][j]``)
and ``catalog`` (``{"name": "example1"}``). Penalty types: ``zero``,
``kernel-of-coupling``. Infinite bounds are written as the strings
``"inf"`` and ``"-inf"``. Floats use Python's shortest round-trip repr, so
save followed by load reproduces every number bit for bit.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .model import (Affine, GameSpec, GenericKernel, KernelOfCouplingPenalty,
                    PerDimensionLinear, SumConstrainedSet, ThetaKernel, UnsupportedError,
                    ZeroPenalty, neg_exp_kernel, validate)

FORMAT = "acscg-game"
VERSION = 1


class GameFileError(ValueError):
    """A game document could not be parsed or describes an invalid game."""


def _enc(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_enc(v) for v in x]
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        raise UnsupportedError("NaN cannot be stored in a game document")
    return x


def _kernel_dict(h):
    if isinstance(h, ThetaKernel):
        return {"type": "theta", "theta": _enc(h.theta), "alpha": _enc(h.alpha),
                "f_self": _enc(h.f_self), "scale": _enc(h.scale)}
    if isinstance(h, GenericKernel) and h.tag == "neg-exp":
        return {"type": "neg-exp"}
    raise UnsupportedError("only θ-family and named kernels can be saved")


def game_to_dict(game):
    c = game.coupling
    if c.kind == "per-dimension-linear":
        cd = {"type": c.kind, "F": _enc(c.F)}
    elif c.kind == "affine":
        cd = {"type": c.kind, "G": _enc(c.G)}
    elif getattr(c, "tag", None):
        cd = {"type": "catalog", "name": c.tag}
    else:
        raise UnsupportedError("only linear, affine and named couplings can be saved")
    if game.penalty.kind not in ("zero", "kernel-of-coupling"):
        raise UnsupportedError("only zero and kernel-of-coupling penalties can be saved")
    return {
        "format": FORMAT, "version": VERSION, "N": game.N, "K": game.K,
        "sets": [{"lower": _enc(s.lower), "upper": _enc(s.upper), "budget": _enc(s.budget)}
                 for s in game.sets],
        "kernels": [[_kernel_dict(h) for h in row] for row in game.kernels],
        "coupling": cd,
        "penalty": {"type": game.penalty.kind},
        "metadata": dict(game.metadata),
    }


def save_game(game, path):
    with open(path, "w") as fh:
        json.dump(game_to_dict(game), fh, indent=1, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return _enc(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

def _num(v, where):
    if isinstance(v, bool):
        raise GameFileError(f"{where}: expected a number, got a boolean")
    if isinstance(v, (int, float)):
        return float(v)
    if v in ("inf", "+inf"):
        return math.inf
    if v == "-inf":
        return -math.inf
    raise GameFileError(f"{where}: expected a number, got {type(v).__name__} {v!r}")


def _arr(v, shape, where):
    def walk(x, depth, path):
        if depth == len(shape):
            return _num(x, path)
        if not isinstance(x, list) or len(x) != shape[depth]:
            size = len(x) if isinstance(x, list) else type(x).__name__
            raise GameFileError(f"{path}: expected a list of length {shape[depth]}, got {size}")
        return [walk(e, depth + 1, f"{path}[{i}]") for i, e in enumerate(x)]
    return np.array(walk(v, 0, where), dtype=float).reshape(shape)


def _field(d, key, where):
    if not isinstance(d, dict):
        raise GameFileError(f"{where}: expected an object")
    if key not in d:
        raise GameFileError(f"{where}: missing field {key!r}")
    return d[key]


def _kernel_from(d, where):
    t = _field(d, "type", where)
    if t == "theta":
        return ThetaKernel(_num(_field(d, "theta", where), f"{where}.theta"),
                           _num(_field(d, "alpha", where), f"{where}.alpha"),
                           _num(_field(d, "f_self", where), f"{where}.f_self"),
                           _num(d.get("scale", 1.0), f"{where}.scale"))
    if t == "neg-exp":
        return _NEG_EXP
    raise GameFileError(f"{where}.type: unknown kernel type {t!r}")


_NEG_EXP = neg_exp_kernel()


def game_from_dict(doc, check=True):
    """Build a game from a decoded document; raises GameFileError."""
    if not isinstance(doc, dict):
        raise GameFileError("document must be a JSON object")
    if doc.get("format", FORMAT) != FORMAT:
        raise GameFileError(f"format: expected {FORMAT!r}, got {doc.get('format')!r}")
    N = _field(doc, "N", "document")
    K = _field(doc, "K", "document")
    for name, v in (("N", N), ("K", K)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise GameFileError(f"{name}: expected a positive integer, got {v!r}")
    sets_raw = _field(doc, "sets", "document")
    if not isinstance(sets_raw, list) or len(sets_raw) != N:
        raise GameFileError(f"sets: expected a list of {N} action sets")
    sets = []
    for n, s in enumerate(sets_raw):
        w = f"sets[{n}]"
        lo = _arr(_field(s, "lower", w), (K,), f"{w}.lower")
        hi = _arr(_field(s, "upper", w), (K,), f"{w}.upper")
        M = _num(_field(s, "budget", w), f"{w}.budget")
        sets.append(SumConstrainedSet(lo, hi, M))
    kr = _field(doc, "kernels", "document")
    if not isinstance(kr, list) or len(kr) != N or any(
            not isinstance(row, list) or len(row) != K for row in kr):
        raise GameFileError(f"kernels: expected an {N} x {K} nested list")
    kernels = [[_kernel_from(kr[n][k], f"kernels[{n}][{k}]") for k in range(K)]
               for n in range(N)]
    cd = _field(doc, "coupling", "document")
    ct = _field(cd, "type", "coupling")
    if ct == "per-dimension-linear":
        coupling = PerDimensionLinear(_arr(_field(cd, "F", "coupling"), (N, N, K), "coupling.F"))
    elif ct == "affine":
        coupling = Affine(_arr(_field(cd, "G", "coupling"), (N, N, K, K), "coupling.G"))
    elif ct == "catalog":
        name = _field(cd, "name", "coupling")
        if name == "example1":
            from .catalog import example1_coupling
            if (N, K) != (2, 2):
                raise GameFileError("coupling: example1 needs N = K = 2")
            coupling = example1_coupling()
        else:
            raise GameFileError(f"coupling.name: unknown catalog coupling {name!r}")
    else:
        raise GameFileError(f"coupling.type: unknown coupling type {ct!r}")
    pt = _field(doc.get("penalty", {"type": "zero"}), "type", "penalty")
    if pt == "zero":
        penalty = ZeroPenalty()
    elif pt == "kernel-of-coupling":
        penalty = KernelOfCouplingPenalty()
    else:
        raise GameFileError(f"penalty.type: unknown penalty type {pt!r}")
    game = GameSpec(sets, kernels, coupling, penalty, metadata=dict(doc.get("metadata", {})))
    if check:
        problems = validate(game)
        if problems:
            raise GameFileError("invalid game: " + "; ".join(problems))
    return game


def load_game(path, check=True):
    """Read a game document from ``path``.

    Raises
    ------
    GameFileError
        On malformed JSON (with line and column), schema violations (naming
        the offending field) or failed game invariants.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise GameFileError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from err
    return game_from_dict(doc, check=check)


def games_equal(g1, g2):
    """Structural equality via the document form (exact float comparison)."""
    return game_to_dict(g1) == game_to_dict(g2)
