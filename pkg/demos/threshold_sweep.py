"""Certificate frequency for random Jackson networks as routing grows.

Prints the fraction of random 5-node, 3-class networks whose best-response
dynamics are certified by the S- and T-matrix conditions at each routing
probability. Run with ``python3 demos/threshold_sweep.py [instances]``.
"""

import sys

from acscg.experiments import jackson_sweep, sweep_grid

instances = int(sys.argv[1]) if len(sys.argv) > 1 else 200
print(f"{'routing':>8} {'C2 (T)':>8} {'C3 (S)':>8} {'generated':>10}")
for p in jackson_sweep(sweep_grid(0.40, 0.70, 0.05), instances=instances, seed=0):
    print(f"{p.routing_prob:8.2f} {p.c2:8.3f} {p.c3:8.3f} {p.generated:10d}")
