# Self-interested attackers that still follow the algorithm.
# Smooth attackers flatten their own profile; rush attackers finish early.

import numpy as np

from evattack.attacks import AttackSpec
from evattack.metrics import compare
from evattack.scenario import bundled_scenario, execute, prepare

free_cfg = bundled_scenario("attack-free")
sc = prepare(free_cfg)
free = execute(free_cfg, scenario=sc)

smooth_cfg = bundled_scenario("smooth")
spec = smooth_cfg.attacks[0]
print("smooth attack on EVs", spec.attackers)
for omega1 in (1e2, 1e3, 1e5):
    cfg = smooth_cfg.with_attacks([AttackSpec(spec.attackers, "smooth", omega1=omega1)])
    r = execute(cfg, scenario=sc)
    var = np.mean([r.profiles[a].var() for a in spec.attackers])
    cmp = compare(r, free)
    print(f"  omega1={omega1:8.0e}: attacker variance {var:.2e}, "
          f"objective +{cmp.objective_delta:8.2f}, zeta {cmp.zeta:.3f}")

rush = execute(bundled_scenario("rush"))
spec = rush.attack_specs[0]
print(f"rush attack on EVs {spec.attackers}, deadline step {spec.t_d}")
for a in spec.attackers:
    done = rush.profiles[a].cumsum() / rush.profiles[a].sum()
    before = free.profiles[a].cumsum() / free.profiles[a].sum()
    print(f"  EV {a}: share done by the deadline {done[spec.t_d]:.4f} "
          f"(attack-free {before[spec.t_d]:.4f})")
print("bound audit:", compare(rush, free).bound["holds"])
