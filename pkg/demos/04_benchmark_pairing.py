"""
Paired speedup measurement
==========================

The speedup ratio compares how many hops the policy-guided sampler and
the plain classical walk each need to push the advancement factor zeta
to the same target. Both arms share the initial configuration and the
same equilibrium reference, so the ratio isolates the sampling policy.

A freshly initialized (random) actor is used here, so expect a ratio
near 1; trained checkpoints (see the train subcommand) are what move it.
"""

import numpy as np

from swarmkmc.agents import make_actor
from swarmkmc.energetics import load_default_potential
from swarmkmc.kinetics import run_classical
from swarmkmc.lattice import Lattice
from swarmkmc.metrics import (bond_delta_after_hop, equilibrium_bonds,
                              speedup_ratio)
from swarmkmc.reweight import SwarmSampler
from swarmkmc import rng

pot, params = load_default_potential()
TARGET = 0.25

lat0 = Lattice.build(5, 5, 5, 0.06, 1, seed=11)
b0 = lat0.cu_cu_first_shell_bonds()
b_eq = equilibrium_bonds(lat0, pot, params, anneal_steps=200_000, seed=900)
span = b_eq - b0
print(f"initial bonds {b0}, equilibrium reference {b_eq:.1f}")

# policy arm: step one hop at a time, tracking bonds incrementally
swarm_lat = lat0.copy()
sampler = SwarmSampler(swarm_lat, pot, params, make_actor(np.random.default_rng(3)), seed=11)
b = float(b0)
rl_steps = None
for k in range(100_000):
    out = sampler.step()
    b += bond_delta_after_hop(swarm_lat, out.vacancy_site, out.target_site)
    if (b - b0) / span >= TARGET:
        rl_steps = k + 1
        break
assert rl_steps is not None, "policy arm never reached the target"
print(f"policy arm reached zeta={TARGET} in {rl_steps} hops")

# classical arm: run in segments until the same bond target is crossed
classical_lat = lat0.copy()
streams = rng.StreamSet(11)


def classical_progress(n: int) -> float:
    res = run_classical(classical_lat, pot, params, n, streams, track_bonds=True)
    return (res.b_final - b0) / span


result = speedup_ratio(TARGET, rl_steps, classical_progress, step_cap=200_000)
print(f"classical arm needed {result.classical_steps} hops")
print(f"speedup ratio {result.ratio:.2f}"
      + (" (lower bound, classical run was capped)" if result.lower_bound else ""))
