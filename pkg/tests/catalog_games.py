"""Small fixed instances of every catalog game, shared by the tests."""

from acscg import catalog


def four_catalog_games():
    spec = catalog.random_power_spec(3, 4, seed=11)
    return {
        "example1": catalog.make_example1(2 / 3, 1.0),
        "power-control": catalog.make_power_control(spec),
        "jackson": catalog.make_jackson(catalog.random_jackson(4, 3, 0.6, seed=5)),
        "ici": catalog.make_ici(spec),
    }


def all_catalog_games():
    games = four_catalog_games()
    games["zero"] = catalog.zero_coupling_game(3, 2)
    games["theta"] = catalog.random_theta_game(3, 3, -0.5, seed=2)
    return games
