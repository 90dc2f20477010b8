"""
The k-limited queue with Erlang vacations
=========================================

Seen from Q1, every visit to Q2 in heavy traffic is an Erlang-k2 vacation.
Its queue-length law follows from the phase generating functions once the k1
boundary probabilities are fixed by the zeros of the denominator inside the
unit disk.
"""

import numpy as np

from kpolling import ctmc, vacation
from kpolling.vacation import VacationParams

vp = VacationParams(lambda1=0.3, mu1=1.0, mu2=1.0, k1=3, k2=2)
print(f"lambda1 E[C] = {vp.lambda1 * vp.mean_cycle:.4f} < k1 = {vp.k1}: {vp.stable}")

###############################################################################
# Roots of the denominator polynomial; exactly k1 of them lie in the closed disk.
roots = vacation.denominator_roots(vp)
for z in roots.all_roots:
    tag = "disk" if abs(z) <= 1 + 1e-9 else ""
    print(f"  {z.real:+.6f} {z.imag:+.6f}i  |z| = {abs(z):.6f} {tag}")

###############################################################################
# Boundary unknowns, phase masses and the two sum rules.
sol = vacation.solve_unknowns(vp, nmax=200)
print("unknowns:", np.round(sol.unknowns, 10))
print("L_h(1):  ", np.round(sol.phase_mass, 10))
print(f"serving mass {sol.phase_mass[:vp.k1].sum():.12f} (rho1 = {vp.rho1})")
print(f"identity residual {sol.relation_residual:.1e}")

###############################################################################
# The inverted pmf against the Markov-chain oracle.
oracle = ctmc.queue_marginal(ctmc.solve_vacation(vp.as_polling(), 400))
n = min(oracle.size, sol.pmf.size)
print(f"sup |pmf - oracle| = {np.abs(sol.pmf[:n] - oracle[:n]).max():.1e}")
print(f"E[N] = {sol.mean_queue_length:.10f}, E[W] = {vacation.mean_waiting_q1(sol):.10f}")
for k in range(6):
    print(f"  P(N = {k}) = {sol.pmf[k]:.8f}")
