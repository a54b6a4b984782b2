"""Two-player square-root coupling game at two resource levels.

With M1 = 2/3 every start reaches the same equilibrium, even though the
spectral-radius bound (about 1.25) is too loose to certify it. With M1 = 2
several equilibria exist and the end point depends on the start.
"""

from acscg import DynamicsConfig, check_conditions, run_dynamics
from acscg.catalog import make_example1
from acscg.experiments import endpoint_spread, random_inits

for M1 in (2 / 3, 2.0):
    game = make_example1(M1, 1.0)
    rep = check_conditions(game, seed=0)
    trajs = [run_dynamics(game, a0, DynamicsConfig(schedule="sequential", max_iter=2000))
             for a0 in random_inits(game, 10, seed=0)]
    print(f"M1 = {M1:.4g}")
    print("  " + "\n  ".join(rep.summary_lines()))
    print(f"  converged {sum(t.converged for t in trajs)}/10, "
          f"endpoint spread {endpoint_spread(trajs):.3g}")
