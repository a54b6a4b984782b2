"""Certificate report for random multi-carrier power control."""

from acscg import check_conditions
from acscg.catalog import make_ici, make_power_control, random_power_spec

spec = random_power_spec(3, 4, seed=11)
for name, game in (("power control", make_power_control(spec)), ("with ICI", make_ici(spec))):
    print(name)
    for line in check_conditions(game, seed=0).summary_lines():
        print("  " + line)
