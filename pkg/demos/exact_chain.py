"""
Exact stationary distribution of the polling chain
==================================================

Build the truncated Markov chain on ``(n1, n2, h)``, solve it and look at the
marginals, the truncation error and the interior balance equations.
"""

import numpy as np

from kpolling import ctmc
from kpolling.model import PollingParams, validate

params = PollingParams(lambda1=0.2, lambda2=0.5, mu1=1.0, mu2=1.0, k1=2, k2=2)
print(validate(params))

###############################################################################
# The generator only contains reachable states.  Phase 0 is the idle server,
# phases 1..k1 serve Q1 and k1+1..k1+k2 serve Q2.
gen = ctmc.build_polling_generator(params, ctmc.TruncationSpec(60, 60))
print(f"{gen.size} states, row-sum residual {gen.row_sum_residual():.1e}")

dist = ctmc.stationary(gen)
p1, p2, joint = ctmc.marginals(dist)
print(f"residual |pi Q| = {dist.residual:.1e}, tail mass = {dist.tail_mass:.1e}")
print(f"E[N1] = {np.arange(p1.size) @ p1:.6f}, E[N2] = {np.arange(p2.size) @ p2:.6f}")
print(f"P(server busy) = {ctmc.busy_probability(dist):.12f} (load {params.rho})")

###############################################################################
# Doubling both caps barely moves any probability.
_, shift = ctmc.truncation_shift(params, ctmc.TruncationSpec(30, 40))
print(f"largest change after doubling caps 30x40: {shift:.1e}")

###############################################################################
# The interior balance equations hold to rounding error.
print(f"max relative balance residual: {ctmc.balance_residuals(dist).max():.1e}")

###############################################################################
# With one customer per visit and equal service rates the server is just an
# M/M/1 queue for the total count.
eq = PollingParams(0.3, 0.4, 1.0, 1.0)
d = ctmc.solve_polling(eq, ctmc.TruncationSpec(100, 100))
total = np.bincount(d.states[:, 0] + d.states[:, 1], weights=d.probs)
geo = (1 - eq.rho) * eq.rho ** np.arange(total.size)
print(f"max |P(N1+N2=n) - geometric| = {np.abs(total - geo).max():.1e}")
