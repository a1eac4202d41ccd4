# Stealthy smooth attack: the attacker waits until its own iterates settle,
# copies everybody's profiles at that moment and then pulls itself back
# toward that copy while still chasing its smooth profile.

from evattack.metrics import compare
from evattack.scenario import bundled_scenario, execute, prepare

cfg = bundled_scenario("stealthy-smooth")
sc = prepare(cfg)
free = execute(cfg.with_attacks([], name="attack-free"), scenario=sc)
stealthy = execute(cfg, scenario=sc)
plain = execute(cfg.with_attacks(cfg.variants["non-stealthy"], name="non-stealthy"),
                scenario=sc)

for hook in stealthy.attack["hooks"]:
    print(f"EV {hook['agent']}: armed at iteration {hook['trigger_iteration']}, "
          f"{hook['injections']} injected steps")
print("wiretap accesses (agent, iterate):", stealthy.attack["wiretap_log"])

a, b = compare(stealthy, free), compare(plain, free)
print(f"zeta: stealthy {a.zeta:.4f}, non-stealthy {b.zeta:.4f} "
      f"({100 * (1 - a.zeta / b.zeta):.0f}% closer to the attack-free solution)")
print(f"objective increase: stealthy {a.objective_delta:.2f}, non-stealthy {b.objective_delta:.2f}")
print(f"largest load deviation: stealthy {a.max_load_deviation:.3f} kW, "
      f"non-stealthy {b.max_load_deviation:.3f} kW")
print(f"deviation bound: gap {a.bound['objective_gap']:.2f} <= {a.bound['bound']:.1f}")
