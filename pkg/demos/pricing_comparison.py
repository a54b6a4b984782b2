"""Gradient play versus the Jacobi update on a Jackson network.

Both priced schemes climb the total utility (minus total delay) to the
same social optimum, which beats the Nash equilibrium from best-response
dynamics.
"""

from acscg import DynamicsConfig, run_dynamics, safe_stepsize
from acscg.catalog import make_jackson, random_jackson
from acscg.experiments import compare_pricing, random_inits

game = make_jackson(random_jackson(5, 3, 0.8, seed=3, cap_fraction=0.3))
a0 = random_inits(game, 1, seed=0)[0]
for alg in ("gradient-play", "jacobi"):
    print(f"safe step for {alg}: {safe_stepsize(game, alg):.4g}")
cfg = DynamicsConfig(schedule="parallel", tol=1e-10, max_iter=20000)
for alg, t in compare_pricing(game, a0, 0.2, cfg).items():
    print(f"{alg:>14}: iterations {t.iterations:5d}, total delay {-t.utilities[-1].sum():.8f}")
ne = run_dynamics(game, a0, DynamicsConfig(tol=1e-12))
print(f"{'Nash':>14}: total delay {-ne.utilities[-1].sum():.8f}")
