"""
Simulating the polling system
=============================

An event-driven simulation with separate random streams for the two arrival
and two service processes, checked against the exact chain.
"""

import numpy as np

from kpolling import ctmc, harness, sim
from kpolling.model import PerturbationPath, PollingParams, realize

params = PollingParams(0.2, 0.5, 1.0, 1.0, 2, 2)
est = sim.run(sim.SimConfig(params, horizon=5e5, warmup=1e3, seed=2024))
for name, value, hw in sim.summary_rows(est):
    print(f"{name:14s} {value:9.5f} +- {hw:.5f}")

###############################################################################
# Distance to the exact joint law.
dist = ctmc.solve_polling(params, ctmc.TruncationSpec(80, 80))
_, _, exact = ctmc.marginals(dist)
print(f"total variation to the exact joint pmf: "
      f"{harness.total_variation(exact, est.joint_pmf):.4f}")
print(f"exact E[N2] = {np.arange(exact.shape[1]) @ exact.sum(axis=0):.5f}")

###############################################################################
# Close to criticality nearly every Q2 visit uses its full quota.
path = PerturbationPath(0.2, 1.0, 1.0, 1, 2)
near = sim.run_scaled(path, 0.01, sim.SimConfig(realize(path, 0.01), horizon=1e6,
                                                warmup=1e4, seed=1))
print(f"fraction of Q2 visits serving k2 = {path.k2}: {near.full_visit_fraction(2):.4f}")
