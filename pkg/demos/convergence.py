"""
Convergence to the heavy-traffic limit
======================================

Sweep ``delta`` down and measure how far the finite system is from the limit
law: total variation for N1, a lattice KS distance for ``delta N2`` and the
largest deviation from independence.
"""

from kpolling import harness
from kpolling.model import PerturbationPath

path = PerturbationPath(lambda1=0.3, mu1=1.0, mu2=1.0, k1=2, k2=1)
report = harness.converge_exact(path, [0.2, 0.1, 0.05, 0.02])
print(f"eta = {report.eta}")
print(f"{'delta':>6s} {'tv_n1':>9s} {'ks_xi':>9s} {'indep':>9s} {'states':>8s}")
for r in report.rows:
    print(f"{r.delta:6.2f} {r.tv_n1:9.5f} {r.ks_xi:9.5f} {r.indep_gap:9.5f} "
          f"{(r.n1max + 1) * (r.n2max + 1):8d}")

###############################################################################
# The same metrics from short simulations; replications give a t half-width.


def rule(delta, eta, replication):
    return dict(horizon=2e5, warmup=2e3, seed=replication, batches=20)


sim_report = harness.converge_sim(path, [0.2, 0.1], rule, replications=3)
for r in sim_report.rows:
    print(f"{r.delta:6.2f} {r.tv_n1:9.5f}+-{r.tv_n1_hw:.4f} {r.ks_xi:9.5f}+-{r.ks_xi_hw:.4f}")

###############################################################################
# When lambda1/k1 equals the critical lambda2/k2 both queues saturate at once
# and there is no limit law of this form; the harness refuses.
try:
    harness.converge_exact(PerturbationPath(0.5, 1.0, 1.0, 1, 1), [0.1])
except ValueError as exc:
    print("refused:", exc)
