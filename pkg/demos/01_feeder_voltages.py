# Feeder model walk-through: the bundled 13-node feeder, its shared-path
# resistance matrix, and how much one charging EV pulls each bus down.

import numpy as np

from evattack.feeder import (BaselineLoad, build_adjacency, build_sensitivity,
                             baseline_voltage, bundled_path, load_feeder)
from evattack.scenario import BaselineParams, synthetic_baseline

feeder = load_feeder(bundled_path("ieee13.json"))
adj = build_adjacency(feeder)
print(f"{feeder.n} buses below the head, names: {', '.join(feeder.names)}")

# R[a, b] is the resistance shared by the head->a and head->b paths
np.set_printoptions(precision=4, suppress=True, linewidth=120)
print("diagonal of R (p.u.):", np.diag(adj.R))

# one 6.6 kW charger on every bus: the column of D is the squared-voltage drop
D = build_sensitivity(adj, np.arange(1, 13), np.full(12, 6.6), feeder.s_base)
print("squared-voltage drop at its own bus per full-power charger:", -np.diag(D))

# the synthetic evening-to-morning baseline and the voltage it leaves
base = synthetic_baseline(BaselineParams(), feeder.n, 52, 0.25)
v = np.sqrt(baseline_voltage(adj, base, feeder.v0, feeder.s_base))
print(f"aggregate baseline: peak {base.aggregate.max():.1f} kW, "
      f"valley {base.aggregate.min():.1f} kW")
print(f"lowest baseline voltage {v.min():.4f} p.u. at bus {feeder.names[v.min(axis=1).argmin()]}")

# a flat 100 kW load on bus 1 alone, for a feel of the numbers
one = BaselineLoad(p=np.eye(12)[:, :1] * 100.0, q=np.zeros((12, 1)))
print("voltages with 100 kW at the first bus:",
      np.sqrt(baseline_voltage(adj, one, 1.0, feeder.s_base)).ravel())
