# Attack-free decentralised valley filling on the bundled scenario:
# 50 EVs on the 13-node feeder over 52 quarter-hour steps.

import numpy as np

from evattack.metrics import charging_window, flatness
from evattack.scenario import bundled_scenario, execute

cfg = bundled_scenario("attack-free")
report = execute(cfg)
print(f"{report.criterion} after {report.iterations} iterations, objective {report.objective:.2f}")

window = charging_window(report.profiles, report.p_max)
flat = flatness(report.total_load, window)
print(f"charging starts at step {window.start}; load over the window "
      f"{report.total_load[window].mean():.1f} kW, rel. std {flat['rel_std']:.1e}")

# a coarse text plot of baseline (.) and total load (#)
lo, hi = 150.0, 310.0
for t in range(0, 52, 2):
    b = int((report.baseline[t] - lo) / (hi - lo) * 60)
    tot = int((report.total_load[t] - lo) / (hi - lo) * 60)
    print(f"{t:2d} " + "".join("#" if i <= tot and i > b else "." if i <= b else " "
                               for i in range(61)))

print(f"lowest voltage {report.voltages.min():.4f} p.u.; largest energy error "
      f"{np.abs(report.energy_delivered - report.energy_required).max():.1e} kWh")
