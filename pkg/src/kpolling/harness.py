"""Convergence experiments: finite-delta systems against the heavy-traffic limit.

For each ``delta`` three distances are reported:

``tv_n1``
    total variation between the N1 marginal and the vacation-queue pmf;
``ks_xi``
    Kolmogorov-Smirnov distance between the cdf of ``delta N2`` and
    ``Exp(eta)``, evaluated at the lattice points ``delta n`` where the
    empirical cdf is right-continuous;
``indep_gap``
    ``max |P(N1 <= n, delta N2 <= xi) - P(N1 <= n) P(delta N2 <= xi)|`` over
    ``n = 0..20`` and ``xi = 0.1, 0.2, ..., 3.0``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np
from scipy import stats

from . import ctmc
from ._io import write_csv
from .ht import HtLimit, heavy_traffic_limit
from .model import PerturbationPath, realize
from .sim import SimConfig, run as run_sim

N1_GRID = np.arange(0, 21)
XI_GRID = np.round(np.arange(1, 31) * 0.1, 10)
TAIL_FLAG = 1e-4

COLUMNS = ["delta", "source", "tv_n1", "ks_xi", "indep_gap", "tv_n1_hw", "ks_xi_hw",
           "indep_gap_hw", "n1max", "n2max", "tail_mass", "horizon", "replications",
           "reliable"]


@dataclass
class ConvergenceRow:
    delta: float
    source: str
    tv_n1: float
    ks_xi: float
    indep_gap: float
    tv_n1_hw: float = 0.0
    ks_xi_hw: float = 0.0
    indep_gap_hw: float = 0.0
    n1max: int | None = None
    n2max: int | None = None
    tail_mass: float = 0.0
    horizon: float | None = None
    replications: int = 0
    reliable: bool = True

    def as_tuple(self):
        return tuple(getattr(self, c) for c in COLUMNS)


@dataclass
class ConvergenceReport:
    path: PerturbationPath
    eta: float
    rows: list[ConvergenceRow] = field(default_factory=list)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self, path):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return int(v)
            return float(v) if isinstance(v, (float, np.floating)) else v
        return write_csv(path, COLUMNS, ([fmt(v) for v in r.as_tuple()] for r in self.rows))


def total_variation(p, q) -> float:
    """Half the L1 distance between two pmfs of equal dimension; along each
    axis the shorter array is padded with zeros."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    shape = np.maximum(p.shape, q.shape)
    p = np.pad(p, [(0, n - m) for n, m in zip(shape, p.shape)])
    q = np.pad(q, [(0, n - m) for n, m in zip(shape, q.shape)])
    return 0.5 * float(np.abs(p - q).sum())


def lattice_ks(pmf_n2, delta, eta) -> float:
    """KS distance between ``delta N2`` and ``Exp(eta)`` at the lattice points."""
    cdf = np.cumsum(pmf_n2)
    xi = delta * np.arange(cdf.size)
    return float(np.abs(cdf + np.expm1(-eta * xi)).max())


def independence_gap(joint, delta, n1_grid=N1_GRID, xi_grid=XI_GRID) -> float:
    joint = np.asarray(joint, float)
    cum = joint.cumsum(axis=0).cumsum(axis=1)
    c1 = cum[:, -1]
    c2 = cum[-1, :]
    gap = 0.0
    for xi in xi_grid:
        m = min(int(math.floor(xi / delta + 1e-9)), joint.shape[1] - 1)
        for n in n1_grid:
            i = min(int(n), joint.shape[0] - 1)
            gap = max(gap, abs(cum[i, m] - c1[i] * c2[m]))
    return float(gap)


def metrics(joint, delta, limit: HtLimit):
    """``(tv_n1, ks_xi, indep_gap)`` for a joint pmf of ``(N1, N2)``."""
    joint = np.asarray(joint, float)
    ref = limit.vacation.inverted.coefficients
    tv = total_variation(joint.sum(axis=1), ref)
    ks = lattice_ks(joint.sum(axis=0), delta, limit.eta)
    return tv, ks, independence_gap(joint, delta)


def default_truncation(delta, eta, n1max=60, factor=12.0):
    return ctmc.TruncationSpec(n1max, int(math.ceil(factor / (eta * delta))))


def _exact_row(path, limit, trunc_rule, method, delta):
    trunc = trunc_rule(delta, limit.eta)
    dist = ctmc.solve_polling(realize(path, delta), trunc, method=method)
    _, _, joint = ctmc.marginals(dist)
    tv, ks, gap = metrics(joint, delta, limit)
    return ConvergenceRow(delta=delta, source="exact", tv_n1=tv, ks_xi=ks, indep_gap=gap,
                          n1max=trunc.n1max, n2max=trunc.n2max, tail_mass=dist.tail_mass,
                          reliable=dist.tail_mass <= TAIL_FLAG)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def converge_exact(path: PerturbationPath, deltas, trunc_rule: Callable | None = None,
                   method="auto", vacation_nmax=200, workers=1) -> ConvergenceReport:
    """Solve the truncated CTMC at each ``delta`` and measure distance to the limit.

    ``trunc_rule(delta, eta)`` returns a :class:`~kpolling.ctmc.TruncationSpec`;
    the default is ``n1max = 60``, ``n2max = ceil(12 / (eta delta))``.  Rows
    whose truncated tail mass exceeds ``1e-4`` are flagged unreliable.
    """
    limit = heavy_traffic_limit(path, nmax=vacation_nmax)
    trunc_rule = trunc_rule or default_truncation
    rows = _map(partial(_exact_row, path, limit, trunc_rule, method), list(deltas), workers)
    return ConvergenceReport(path=path, eta=limit.eta, rows=rows)


def default_sim_rule(delta, eta, replication=0):
    """Horizon of ``1000`` relaxation times ``1/(eta delta)^2``, 1% warmup."""
    horizon = max(1e5, 1000.0 / (eta * delta) ** 2)
    return dict(horizon=horizon, warmup=horizon / 100, seed=replication, batches=20)


def _sim_metrics(path, limit, rule, job):
    delta, r = job
    cfg = SimConfig(params=realize(path, delta), delta=delta, **rule(delta, limit.eta, r))
    est = run_sim(cfg)
    return metrics(est.joint_pmf, delta, limit), est.short_horizon, cfg.horizon


def _sim_row(delta, results):
    vals = np.array([m for m, _, _ in results])
    n = len(results)
    means = vals.mean(axis=0)
    if n > 1:
        hw = stats.t.ppf(0.975, n - 1) * vals.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        hw = np.full(3, math.nan)
    return ConvergenceRow(delta=delta, source="simulated", tv_n1=float(means[0]),
                          ks_xi=float(means[1]), indep_gap=float(means[2]),
                          tv_n1_hw=float(hw[0]), ks_xi_hw=float(hw[1]),
                          indep_gap_hw=float(hw[2]), horizon=results[0][2],
                          replications=n, reliable=not any(s for _, s, _ in results))


def converge_sim(path: PerturbationPath, deltas, sim_config_rule: Callable | None = None,
                 replications=3, vacation_nmax=200, workers=1) -> ConvergenceReport:
    """Same metrics from simulated distributions.

    ``sim_config_rule(delta, eta, replication)`` returns the keyword
    arguments (``horizon``, ``warmup``, ``seed``, ``batches``) of a
    :class:`~kpolling.sim.SimConfig` for the realized path point.  Each
    metric is averaged over independent replications and reported with a
    95% t half-width.  With ``workers > 1`` the ``(delta, replication)``
    runs are spread over processes, so the rule must be picklable (a
    module-level function).
    """
    limit = heavy_traffic_limit(path, nmax=vacation_nmax)
    rule = sim_config_rule or default_sim_rule
    deltas = list(deltas)
    jobs = [(d, r) for d in deltas for r in range(replications)]
    results = _map(partial(_sim_metrics, path, limit, rule), jobs, workers)
    rows = [_sim_row(d, results[i * replications:(i + 1) * replications])
            for i, d in enumerate(deltas)]
    return ConvergenceReport(path=path, eta=limit.eta, rows=rows)
