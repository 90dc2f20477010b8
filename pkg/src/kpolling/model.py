"""Model parameters for the two-queue k-limited polling system.

The server alternates between Q1 and Q2, serving at most ``k1`` (``k2``)
customers per visit, with zero switch-over times, Poisson arrivals and
exponential services.  The heavy-traffic analysis lets Q2 approach critical
load along a one-parameter family indexed by ``delta``; the paths below
produce the concrete parameter points for that family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .errors import InvalidParameterError, InvalidPathError, OutOfRangeError

PATH_RTOL = 1e-12


def _check_limit(name, value):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise InvalidParameterError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class PollingParams:
    """Rates and per-visit service limits of the polling model.

    Arrival rates may be zero (a queue that never receives work); service
    rates must be strictly positive.  Use :func:`validate` for the strict
    admissibility check of the heavy-traffic model.
    """

    lambda1: float
    lambda2: float
    mu1: float
    mu2: float
    k1: int = 1
    k2: int = 1

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "mu1", "mu2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidParameterError(f"{name} must be finite, got {v!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidParameterError("arrival rates must be non-negative")
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise InvalidParameterError("service rates must be positive")
        _check_limit("k1", self.k1)
        _check_limit("k2", self.k2)
        object.__setattr__(self, "k1", int(self.k1))
        object.__setattr__(self, "k2", int(self.k2))

    @property
    def rho1(self) -> float:
        return self.lambda1 / self.mu1

    @property
    def rho2(self) -> float:
        return self.lambda2 / self.mu2

    @property
    def rho(self) -> float:
        return self.rho1 + self.rho2

    def as_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "mu1": self.mu1,
                "mu2": self.mu2, "k1": self.k1, "k2": self.k2}


class StabilityReport(NamedTuple):
    rho: float
    rho1: float
    rho2: float
    stable: bool
    q2_critical_assumption: bool


def validate(params: PollingParams) -> StabilityReport:
    """Check load and the ordering ``lambda1/k1 < lambda2/k2``.

    The ordering is what makes Q2 (and not Q1) the queue that saturates as the
    total load approaches one.

    Raises
    ------
    InvalidParameterError
        If any rate is not strictly positive.
    """
    for name in ("lambda1", "lambda2", "mu1", "mu2"):
        if getattr(params, name) <= 0:
            raise InvalidParameterError(f"{name} must be strictly positive")
    return StabilityReport(
        rho=params.rho,
        rho1=params.rho1,
        rho2=params.rho2,
        stable=params.rho < 1,
        q2_critical_assumption=params.lambda1 / params.k1 < params.lambda2 / params.k2,
    )


@dataclass(frozen=True)
class PerturbationPath:
    """Fix everything but ``lambda2`` and lower it by ``delta * omega`` below
    its critical value ``mu2 * (1 - lambda1/mu1)``.

    ``omega`` defaults to ``mu2``, in which case the load is exactly
    ``1 - delta``.
    """

    lambda1: float
    mu1: float
    mu2: float
    k1: int = 1
    k2: int = 1
    omega: float | None = None

    def __post_init__(self):
        if self.omega is None:
            object.__setattr__(self, "omega", self.mu2)
        if self.omega <= 0:
            raise InvalidParameterError("omega must be positive")
        if self.lambda1 <= 0 or self.mu1 <= 0 or self.mu2 <= 0:
            raise InvalidParameterError("rates must be positive")
        if self.lambda1 >= self.mu1:
            raise InvalidParameterError("Q1 alone saturates the server (lambda1 >= mu1)")
        _check_limit("k1", self.k1)
        _check_limit("k2", self.k2)

    @property
    def lambda2_limit(self) -> float:
        """Critical arrival rate of Q2 (``delta = 0``)."""
        return self.mu2 * (1.0 - self.lambda1 / self.mu1)

    @property
    def heavy_traffic_admissible(self) -> bool:
        """Whether Q2 alone saturates in the limit, i.e. ``lambda1/k1 < lambda2*/k2``."""
        return self.lambda1 / self.k1 < self.lambda2_limit / self.k2


def realize(path: PerturbationPath, delta: float) -> PollingParams:
    if not delta > 0:
        raise OutOfRangeError(f"delta must be positive, got {delta!r}")
    lam2 = path.lambda2_limit - delta * path.omega
    if lam2 <= 0:
        raise OutOfRangeError(f"delta={delta} drives lambda2 to {lam2} <= 0")
    return PollingParams(path.lambda1, lam2, path.mu1, path.mu2, path.k1, path.k2)


def hold_lambda1(path: "GeneralizedPath", delta: float) -> tuple[float, float]:
    """Keep ``lambda1`` at its limit and put the whole load gap on ``lambda2``."""
    lam1 = path.lambda1_star
    return lam1, path.mu2 * (1.0 - delta * path.omega_star - lam1 / path.mu1)


def residual_lambda2(lambda1_rule: Callable[["GeneralizedPath", float], float]):
    """Build an interpolation from a rule for ``lambda1(delta)``; ``lambda2``
    absorbs whatever is needed to keep the load at ``1 - delta * omega_star``."""

    def rule(path, delta):
        lam1 = lambda1_rule(path, delta)
        return lam1, path.mu2 * (1.0 - delta * path.omega_star - lam1 / path.mu1)

    return rule


@dataclass(frozen=True)
class GeneralizedPath:
    """Let both arrival rates move towards a critical point ``(lambda1*, lambda2*)``
    with load ``1 - delta * omega_star``."""

    lambda1_star: float
    lambda2_star: float
    mu1: float
    mu2: float
    k1: int = 1
    k2: int = 1
    omega_star: float = 1.0
    interpolation: Callable[["GeneralizedPath", float], tuple[float, float]] = field(
        default=hold_lambda1, compare=False)

    def __post_init__(self):
        _check_limit("k1", self.k1)
        _check_limit("k2", self.k2)
        if min(self.lambda1_star, self.lambda2_star, self.mu1, self.mu2) <= 0:
            raise InvalidPathError("limiting rates must be positive")
        if self.omega_star <= 0:
            raise InvalidPathError("omega_star must be positive")
        load = self.lambda1_star / self.mu1 + self.lambda2_star / self.mu2
        if not math.isclose(load, 1.0, rel_tol=PATH_RTOL, abs_tol=0.0):
            raise InvalidPathError(f"limiting load must equal 1, got {load!r}")
        bound = 1.0 / (self.k1 / self.mu1 + self.k2 / self.mu2)
        if not self.lambda1_star / self.k1 < bound:
            raise InvalidPathError(
                f"lambda1*/k1 = {self.lambda1_star / self.k1} must be below {bound}; "
                "otherwise Q2 is not the only queue to saturate")

    @property
    def omega(self) -> float:
        """The equivalent ``omega`` of the single-rate path (``omega_star * mu2``)."""
        return self.omega_star * self.mu2


def realize_generalized(path: GeneralizedPath, delta: float) -> PollingParams:
    if delta < 0:
        raise OutOfRangeError(f"delta must be non-negative, got {delta!r}")
    if delta == 0:
        lam1, lam2 = path.lambda1_star, path.lambda2_star
    else:
        lam1, lam2 = path.interpolation(path, delta)
    if lam1 <= 0 or lam2 <= 0:
        raise OutOfRangeError(f"delta={delta} gives non-positive rates ({lam1}, {lam2})")
    load = lam1 / path.mu1 + lam2 / path.mu2
    target = 1.0 - delta * path.omega_star
    if not math.isclose(load, target, rel_tol=PATH_RTOL, abs_tol=0.0):
        raise InvalidPathError(f"interpolation gives load {load}, expected {target}")
    return PollingParams(lam1, lam2, path.mu1, path.mu2, path.k1, path.k2)
