"""Heavy-traffic limit of the polling model as Q2 becomes critically loaded.

With ``lambda2 = mu2 (1 - lambda1/mu1) - delta * omega`` and
``lambda1/k1 < lambda2/k2``, as ``delta -> 0``

    P(N1 <= n, delta N2 <= xi)  ->  L(n) (1 - exp(-eta xi)),

where ``L`` is the queue-length cdf of the vacation queue in
:mod:`kpolling.vacation` and ``eta = omega / (mu2 + lambda1 mu2 (mu2 - mu1) / mu1**2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._io import write_csv
from .errors import DomainError, InvalidParameterError
from .model import PerturbationPath, PollingParams
from .vacation import VacationParams, VacationSolution, solve_unknowns

TAIL_POINT_TOL = 1e-9


def diffusion_coefficient(lambda1, mu1, mu2):
    """``mu2 + lambda1 mu2 (mu2 - mu1) / mu1**2``; the second-order coefficient
    of the equation ``omega P' = -c P''`` for the density of ``delta N2``."""
    return mu2 + lambda1 * mu2 * (mu2 - mu1) / mu1 ** 2


def compute_eta(lambda1, mu1, mu2, omega=None):
    """Rate of the exponential limit of ``delta N2``."""
    if omega is None:
        omega = mu2
    if not 0 < lambda1 < mu1:
        raise InvalidParameterError("need 0 < lambda1 < mu1")
    c = diffusion_coefficient(lambda1, mu1, mu2)
    assert c > 0, "positive by construction when lambda1 < mu1"
    return omega / c


def workload_heuristic_eta(lambda1, lambda2, mu1, mu2, omega=None):
    """Same rate derived from the total workload instead.

    In heavy traffic the combined workload behaves like that of an M/G/1
    queue with hyperexponential services, whose scaled limit has mean
    ``lambda1/mu1**2 + lambda2/mu2**2``.  Nearly all work sits in Q2, so
    ``(1 - rho) N2`` has mean ``mu2`` times that, and ``delta`` relates to
    ``1 - rho`` through ``delta = (1 - rho) mu2 / omega``.  Pass ``lambda2`` at
    its critical value ``mu2 (1 - lambda1/mu1)``.
    """
    if omega is None:
        omega = mu2
    return omega / (mu2 ** 2 * (lambda1 / mu1 ** 2 + lambda2 / mu2 ** 2))


def density(eta, xi):
    """Limit density ``eta exp(-eta xi)`` of the scaled queue length."""
    return eta * np.exp(-eta * np.asarray(xi, dtype=float))


class CdfInterval(NamedTuple):
    lo: float
    hi: float


@dataclass
class HtLimit:
    eta: float
    vacation: VacationSolution
    params_at_limit: PollingParams
    omega: float

    @property
    def vacation_cdf(self) -> np.ndarray:
        return self.vacation.inverted.cdf

    @property
    def tail_mass(self) -> float:
        return self.vacation.tail_mass


def heavy_traffic_limit(path: PerturbationPath, nmax: int = 200) -> HtLimit:
    """Assemble the limit law for a perturbation path."""
    if not path.heavy_traffic_admissible:
        raise InvalidParameterError(
            f"lambda1/k1 = {path.lambda1 / path.k1:.6g} is not below the critical "
            f"lambda2/k2 = {path.lambda2_limit / path.k2:.6g}; Q1 does not stay stable")
    vac = solve_unknowns(VacationParams(path.lambda1, path.mu1, path.mu2, path.k1, path.k2), nmax)
    limit = PollingParams(path.lambda1, path.lambda2_limit, path.mu1, path.mu2, path.k1, path.k2)
    eta = compute_eta(path.lambda1, path.mu1, path.mu2, path.omega)
    return HtLimit(eta=eta, vacation=vac, params_at_limit=limit, omega=path.omega)


def vacation_cdf_at(limit: HtLimit, n1: int):
    """``L(n1)``, or a :class:`CdfInterval` when ``n1`` lies beyond the
    computed pmf and the neglected tail exceeds ``1e-9``."""
    if n1 < 0:
        return 0.0
    cdf = limit.vacation_cdf
    if n1 < cdf.size:
        return float(cdf[n1])
    if limit.tail_mass > TAIL_POINT_TOL:
        return CdfInterval(float(cdf[-1]), 1.0)
    return float(min(1.0, cdf[-1] + limit.tail_mass))


def joint_limit_cdf(limit: HtLimit, n1: int, xi: float):
    """``L(n1) (1 - exp(-eta xi))``; an interval if ``L(n1)`` is only bracketed."""
    if xi < 0:
        raise DomainError("xi must be non-negative")
    f = -math.expm1(-limit.eta * xi)
    l = vacation_cdf_at(limit, n1)
    if isinstance(l, CdfInterval):
        return CdfInterval(l.lo * f, l.hi * f)
    return l * f


def scaled_wait_q2_rate(limit: HtLimit, lambda2_at_limit: float | None = None) -> float:
    """Rate ``lambda2 eta`` of the exponential limit of the scaled waiting time at Q2."""
    if lambda2_at_limit is None:
        lambda2_at_limit = limit.params_at_limit.lambda2
    return lambda2_at_limit * limit.eta


def cdf_table(limit: HtLimit, n1_grid, xi_grid):
    rows = []
    for n1 in n1_grid:
        for xi in xi_grid:
            v = joint_limit_cdf(limit, int(n1), float(xi))
            lo, hi = (v.lo, v.hi) if isinstance(v, CdfInterval) else (v, v)
            rows.append((int(n1), float(xi), float(lo), float(hi)))
    return rows


def cdf_table_to_csv(limit: HtLimit, n1_grid, xi_grid, path):
    return write_csv(path, ["n1", "xi", "cdf_lo", "cdf_hi"], cdf_table(limit, n1_grid, xi_grid))
