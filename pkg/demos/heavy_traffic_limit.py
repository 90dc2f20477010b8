"""
Heavy-traffic limit law
=======================

As Q2 approaches critical load along ``lambda2 = mu2 (1 - rho1) - delta omega``,
``(N1, delta N2)`` becomes a product of the vacation-queue law and an
exponential with rate ``eta``.
"""

import numpy as np

from kpolling import ht
from kpolling.model import PerturbationPath

path = PerturbationPath(lambda1=0.3, mu1=1.0, mu2=2.0, k1=2, k2=1)
print(f"lambda2 at the limit: {path.lambda2_limit}, admissible: {path.heavy_traffic_admissible}")

###############################################################################
# Two routes to eta agree: the diffusion coefficient of the limit equation and
# the total-workload argument.
eta = ht.compute_eta(path.lambda1, path.mu1, path.mu2, path.omega)
alt = ht.workload_heuristic_eta(path.lambda1, path.lambda2_limit, path.mu1, path.mu2, path.omega)
print(f"eta = {eta:.15f}, workload route = {alt:.15f}")

###############################################################################
# Joint limit cdf on a small grid.
limit = ht.heavy_traffic_limit(path)
xi = np.array([0.25, 0.5, 1.0, 2.0])
print("n1 \\ xi " + " ".join(f"{x:8.2f}" for x in xi))
for n1 in range(5):
    print(f"{n1:7d}  " + " ".join(f"{ht.joint_limit_cdf(limit, n1, x):8.5f}" for x in xi))
print(f"scaled Q2 waiting time rate: {ht.scaled_wait_q2_rate(limit):.6f}")
