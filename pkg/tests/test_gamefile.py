import json

import numpy as np
import pytest

from acscg.gamefile import GameFileError, game_from_dict, game_to_dict, games_equal, load_game, save_game
from acscg.model import utilities, random_feasible_profile
from acscg.catalog import make_rng
from catalog_games import all_catalog_games


@pytest.mark.parametrize("name", sorted(all_catalog_games()))
def test_round_trip_is_bit_exact(name, tmp_path):
    g = all_catalog_games()[name]
    path = tmp_path / "g.json"
    save_game(g, path)
    g2 = load_game(path)
    assert games_equal(g, g2)
    a = random_feasible_profile(g, make_rng(0), interior=True)
    np.testing.assert_array_equal(utilities(g, a), utilities(g2, a))
    # saving again reproduces the file byte for byte
    path2 = tmp_path / "g2.json"
    save_game(g2, path2)
    assert path.read_bytes() == path2.read_bytes()


def _doc():
    return game_to_dict(all_catalog_games()["power-control"])


def test_string_budget_names_field():
    doc = _doc()
    doc["sets"][1]["budget"] = "lots"
    with pytest.raises(GameFileError, match=r"sets\[1\]\.budget"):
        game_from_dict(doc)


def test_upper_below_budget_is_rejected():
    doc = _doc()
    doc["sets"][0]["upper"] = [0.01] * len(doc["sets"][0]["upper"])
    with pytest.raises(GameFileError, match="below the budget"):
        game_from_dict(doc)


def test_malformed_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"N": 2,\n "K": }')
    with pytest.raises(GameFileError, match="line 2"):
        load_game(p)


def test_wrong_shape_reports_path():
    doc = _doc()
    doc["coupling"]["F"] = doc["coupling"]["F"][:-1]
    with pytest.raises(GameFileError, match="coupling.F"):
        game_from_dict(doc)


def test_unknown_tags():
    doc = _doc()
    doc["coupling"] = {"type": "catalog", "name": "mystery"}
    with pytest.raises(GameFileError, match="mystery"):
        game_from_dict(doc)
    doc = _doc()
    doc["kernels"][0][0] = {"type": "cubic"}
    with pytest.raises(GameFileError, match=r"kernels\[0\]\[0\]"):
        game_from_dict(doc)


def test_infinite_bounds_are_strings(tmp_path):
    g = all_catalog_games()["theta"]
    p = tmp_path / "t.json"
    save_game(g, p)
    doc = json.loads(p.read_text())
    assert doc["sets"][0]["upper"][0] == "inf"
    assert np.isinf(load_game(p).upper).all()


def test_saved_documents_match_shipped_schema(tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    from pathlib import Path
    schema = json.loads((Path(__file__).parent.parent / "docs" / "game-schema.json").read_text())
    for name, g in all_catalog_games().items():
        p = tmp_path / f"{name}.json"
        save_game(g, p)
        jsonschema.validate(json.loads(p.read_text()), schema)
