"""Closed-form analysis of the k1-limited queue with Erlang-k2 multiple vacations.

Customers arrive at rate ``lambda1`` and are served at rate ``mu1``; a visit
ends after ``k1`` services or when the queue empties, and is followed by a
vacation of ``k2`` exponential(``mu2``) stages.  A vacation that ends on an
empty queue is immediately followed by another one.

The generating functions ``L_h(z) = sum_n P(N = n, H = h) z^n`` are rational
in ``z``.  They depend on ``k1`` boundary probabilities: ``P(N=1, H=h)`` for
``h < k1`` and ``P(N=0, H=k1+k2)``.  Those are fixed by requiring the
numerator of ``L_{k1+k2}`` to vanish at the ``k1 - 1`` zeros of the
denominator inside the unit disk, together with normalization.  The queue
length pmf then follows by sampling ``sum_h L_h`` on the unit circle and
inverting with an FFT.

Phases are numbered as in the polling model: ``1..k1`` are service phases,
``k1+1..k1+k2`` vacation stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from ._io import write_csv
from .errors import (AccuracyError, DomainError, NumericalError, UnstableSystemError,
                     UnsupportedDegeneracyError, InvalidParameterError)
from .model import PollingParams

DISK_TOL = 1e-9
UNIT_ROOT_TOL = 1e-8
CLIP_TOL = 1e-10
INVERSION_TOL = 1e-6
VALIDATION_TOL = 1e-10


@dataclass(frozen=True)
class VacationParams:
    lambda1: float
    mu1: float
    mu2: float
    k1: int = 1
    k2: int = 1

    def __post_init__(self):
        if min(self.lambda1, self.mu1, self.mu2) <= 0:
            raise InvalidParameterError("rates must be positive")
        if int(self.k1) != self.k1 or int(self.k2) != self.k2 or min(self.k1, self.k2) < 1:
            raise InvalidParameterError("k1 and k2 must be positive integers")

    @classmethod
    def from_polling(cls, params: PollingParams) -> "VacationParams":
        return cls(params.lambda1, params.mu1, params.mu2, params.k1, params.k2)

    def as_polling(self) -> PollingParams:
        """Parameter point used by the CTMC reference (``lambda2`` is unused there)."""
        return PollingParams(self.lambda1, 0.0, self.mu1, self.mu2, self.k1, self.k2)

    @property
    def rho1(self) -> float:
        return self.lambda1 / self.mu1

    @property
    def mean_cycle(self) -> float:
        """Mean visit-plus-vacation time ``k2 / (mu2 (1 - rho1))``."""
        if self.rho1 >= 1:
            return np.inf
        return self.k2 / (self.mu2 * (1.0 - self.rho1))

    @property
    def drift(self) -> float:
        """``k1 (1 - rho1) - k2 lambda1 / mu2``; positive iff the queue is stable.

        This is also ``D'(1)`` for the denominator ``D`` of the PGF.
        """
        return self.k1 * (1.0 - self.rho1) - self.k2 * self.lambda1 / self.mu2

    @property
    def stable(self) -> bool:
        return self.rho1 < 1 and self.lambda1 * self.mean_cycle < self.k1


def pgf_G(params: VacationParams, z):
    """PGF of the number of arrivals during one service."""
    den = params.lambda1 * (1 - np.asarray(z, dtype=complex)) + params.mu1
    if np.any(den == 0):
        raise DomainError("pgf_G evaluated at its pole")
    return _squeeze(params.mu1 / den)


def pgf_H(params: VacationParams, z):
    """PGF of the number of arrivals during one vacation stage."""
    den = params.lambda1 * (1 - np.asarray(z, dtype=complex)) + params.mu2
    if np.any(den == 0):
        raise DomainError("pgf_H evaluated at its pole")
    return _squeeze(params.mu2 / den)


def _squeeze(v):
    v = np.asarray(v)
    return complex(v) if v.ndim == 0 else v


def denominator_polynomial(params: VacationParams) -> Polynomial:
    """``z^k1 (l(1-z)+m1)^k1 (l(1-z)+m2)^k2 - m1^k1 m2^k2``; its zeros are
    the zeros of ``D(z) = 1 - (G(z)/z)^k1 H(z)^k2``."""
    l, m1, m2, k1, k2 = params.lambda1, params.mu1, params.mu2, params.k1, params.k2
    a = Polynomial([l + m1, -l])
    b = Polynomial([l + m2, -l])
    z = Polynomial([0.0, 1.0])
    return z ** k1 * a ** k1 * b ** k2 - m1 ** k1 * m2 ** k2


def denominator(params: VacationParams, z):
    z = np.asarray(z, dtype=complex)
    g = pgf_G(params, z) / z
    return 1.0 - g ** params.k1 * pgf_H(params, z) ** params.k2


def _denominator_and_slope(params, z):
    l, m1, m2, k1, k2 = params.lambda1, params.mu1, params.mu2, params.k1, params.k2
    a = l * (1 - z) + m1
    b = l * (1 - z) + m2
    prod = (m1 / (z * a)) ** k1 * (m2 / b) ** k2
    dlog = k1 * (-1.0 / z + l / a) + k2 * l / b
    return 1.0 - prod, -prod * dlog


def _polish(params, z, steps=8):
    for _ in range(steps):
        d, dd = _denominator_and_slope(params, z)
        if dd == 0:
            break
        step = d / dd
        z = z - step
        if abs(step) < 1e-16 * max(1.0, abs(z)):
            break
    return z


@dataclass(frozen=True)
class BoundaryRoots:
    all_roots: np.ndarray
    disk_roots: np.ndarray
    interior: np.ndarray


def denominator_roots(params: VacationParams) -> BoundaryRoots:
    """Zeros of the PGF denominator in the closed unit disk.

    Roots come from the companion matrix of :func:`denominator_polynomial`
    and are then refined by Newton steps on ``D`` itself.  Exactly ``k1``
    of them lie in ``|z| <= 1`` (one of them ``z = 1``); the others are
    returned in ``interior``.

    Raises
    ------
    UnstableSystemError
        If the vacation queue is not stable (the count argument fails).
    NumericalError
        If the closed disk does not contain exactly ``k1`` roots.
    UnsupportedDegeneracyError
        If two interior roots coincide.
    """
    if not params.stable:
        raise UnstableSystemError(
            f"vacation queue unstable: lambda1*E[C] = {params.lambda1 * params.mean_cycle:.6g}"
            f" >= k1 = {params.k1}")
    raw = denominator_polynomial(params).roots().astype(complex)
    roots = np.array([_polish(params, r) for r in raw])
    in_disk = roots[np.abs(roots) <= 1.0 + DISK_TOL]
    if in_disk.size != params.k1:
        raise NumericalError(
            f"found {in_disk.size} denominator roots in the closed unit disk, expected {params.k1}")
    near_one = np.abs(in_disk - 1.0) < UNIT_ROOT_TOL
    if near_one.sum() != 1:
        raise NumericalError("expected exactly one denominator root at z = 1")
    interior = in_disk[~near_one]
    interior = np.where(np.abs(interior.imag) < 1e-12, interior.real + 0j, interior)
    for i in range(interior.size):
        for j in range(i + 1, interior.size):
            if abs(interior[i] - interior[j]) < 1e-7:
                raise UnsupportedDegeneracyError(
                    f"repeated interior root near {interior[i]:.6g}")
    disk = np.concatenate([[1.0 + 0j], interior])
    return BoundaryRoots(all_roots=roots, disk_roots=disk, interior=interior)


def _numerator_row(params, z):
    """Coefficients of the numerator bracket of ``L_{k1+k2}`` in the unknowns
    ``(pi_{1,1}, ..., pi_{1,k1-1}, pi_{0,k1+k2})``."""
    k1 = params.k1
    g = pgf_G(params, z) / z
    row = np.empty(k1, dtype=complex)
    for h in range(1, k1):
        row[h - 1] = params.mu1 / params.mu2 * (1 - g ** (k1 - h))
    row[k1 - 1] = 1 - g ** k1
    return row


def _last_stage_mass_row(params):
    """``L_{k1+k2}(1)`` as a linear function of the unknowns (L'Hopital at z = 1).

    Only the first derivatives at 1 matter: ``g'(1) = rho1 - 1`` and the
    slope of the denominator equals :attr:`VacationParams.drift`.
    """
    k1 = params.k1
    dg = params.rho1 - 1.0
    row = np.empty(k1)
    for h in range(1, k1):
        row[h - 1] = -params.mu1 / params.mu2 * (k1 - h) * dg
    row[k1 - 1] = -k1 * dg
    return row / params.drift


def _phase_mass_rows(params):
    """Rows ``R`` with ``L_h(1) = R[h-1] @ unknowns`` for every phase ``h``."""
    k1, k2 = params.k1, params.k2
    last = _last_stage_mass_row(params)
    rows = np.zeros((k1 + k2, k1))
    r = params.mu2 / params.mu1
    for h1 in range(1, k1 + 1):
        rows[h1 - 1] = r * last
        rows[h1 - 1, k1 - 1] -= r
        for i in range(1, h1):
            rows[h1 - 1, i - 1] -= 1.0
    rows[k1:] = last
    return rows


@dataclass
class InvertedPmf:
    pmf: np.ndarray
    coefficients: np.ndarray
    tail_mass: float
    inversion_residual: float
    renormalization_shift: float

    @property
    def mean(self) -> float:
        # coefficients far beyond nmax are rounding noise, biased upward by clipping
        return float(np.arange(self.pmf.size) @ self.pmf)

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)


@dataclass
class VacationSolution:
    params: VacationParams
    unknowns: np.ndarray
    roots: np.ndarray
    phase_mass: np.ndarray
    relation_residual: float
    inverted: InvertedPmf | None = None

    @property
    def pi_1(self) -> np.ndarray:
        """``P(N = 1, H = h)`` for ``h = 1..k1-1``."""
        return self.unknowns[:-1]

    @property
    def pi_0_last(self) -> float:
        """``P(N = 0, H = k1 + k2)``: empty queue in the last vacation stage."""
        return float(self.unknowns[-1])

    @property
    def pmf(self) -> np.ndarray:
        return self.inverted.pmf

    @property
    def tail_mass(self) -> float:
        return self.inverted.tail_mass

    @property
    def mean_queue_length(self) -> float:
        return self.inverted.mean


def relation_residual(params: VacationParams, unknowns) -> float:
    """Residual of the linear identity that the boundary unknowns satisfy:
    ``k1 pi0 + (mu1/mu2) sum_h (k1-h) pi1_h = (k1 (1-rho1) - k2 lambda1/mu2) / k2``."""
    k1, k2 = params.k1, params.k2
    a, b = np.asarray(unknowns[:-1]), float(unknowns[-1])
    lhs = k1 * b + params.mu1 / params.mu2 * sum((k1 - h) * a[h - 1] for h in range(1, k1))
    return abs(lhs - params.drift / k2)


def solve_unknowns(params: VacationParams, nmax: int | None = 200) -> VacationSolution:
    """Determine the boundary unknowns and, if ``nmax`` is given, the queue pmf.

    Each interior denominator root contributes one complex equation
    (numerator = 0).  Real roots give their real part; of a conjugate pair
    only one member is used, split into real and imaginary parts.  The
    last equation is normalization, ``sum_h L_h(1) = 1``.

    Raises
    ------
    NumericalError
        Singular linear system.
    AccuracyError
        Negative unknowns or a failed identity check.
    """
    if isinstance(params, PollingParams):
        params = VacationParams.from_polling(params)
    roots = denominator_roots(params)
    k1 = params.k1
    A = np.zeros((k1, k1))
    rhs = np.zeros(k1)
    i = 0
    for z in roots.interior:
        if z.imag < 0:
            continue
        row = _numerator_row(params, z)
        A[i] = row.real
        i += 1
        if z.imag > 0:
            A[i] = row.imag
            i += 1
    if i != k1 - 1:
        raise NumericalError(f"interior roots gave {i} equations, expected {k1 - 1}")
    mass_rows = _phase_mass_rows(params)
    A[k1 - 1] = mass_rows.sum(axis=0)
    rhs[k1 - 1] = 1.0
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"boundary system is singular (cond {cond:.3e})")
    unknowns = np.linalg.solve(A, rhs)
    if unknowns.min() < -VALIDATION_TOL:
        raise AccuracyError(f"negative boundary probability {unknowns.min():.3e}")
    unknowns = np.clip(unknowns, 0.0, None)
    res = relation_residual(params, unknowns)
    if res > VALIDATION_TOL:
        raise AccuracyError(f"boundary identity residual {res:.3e}")
    sol = VacationSolution(params=params, unknowns=unknowns, roots=roots.interior,
                           phase_mass=mass_rows @ unknowns, relation_residual=res)
    if nmax is not None:
        sol.inverted = stable_queue_pmf(sol, nmax)
    return sol


def _phase_values(sol: VacationSolution, z):
    """All phase PGFs at points ``z`` (none of which may be 0 or a root of D)."""
    p = sol.params
    k1, k2 = p.k1, p.k2
    a, b = sol.unknowns[:-1], sol.unknowns[-1]
    r12 = p.mu1 / p.mu2
    G = p.mu1 / (p.lambda1 * (1 - z) + p.mu1)
    H = p.mu2 / (p.lambda1 * (1 - z) + p.mu2)
    g = G / z
    num = b * (1 - g ** k1)
    for h in range(1, k1):
        num = num + r12 * a[h - 1] * (1 - g ** (k1 - h))
    last = H ** k2 * num / (1 - g ** k1 * H ** k2)
    out = np.empty((k1 + k2,) + np.shape(z), dtype=complex)
    for h1 in range(1, k1 + 1):
        v = z / r12 * g ** h1 * (last - b)
        for h in range(1, h1):
            v = v - a[h - 1] * z * g ** (h1 - h)
        out[h1 - 1] = v
    base = r12 * a.sum() + b + r12 / z * out[k1 - 1]
    for h2 in range(k1 + 1, k1 + k2):
        out[h2 - 1] = H ** (h2 - k1) * base
    out[k1 + k2 - 1] = last
    return out


def eval_phase_pgf(sol: VacationSolution, h: int, z):
    """``L_h(z) = sum_n P(N = n, H = h) z^n``.

    At ``z = 1`` (the removable singularity shared by all phases) the
    L'Hopital limit is returned.

    Raises
    ------
    DomainError
        At ``z = 0``, at a pole of G or H, or within ``1e-8`` of an interior
        denominator root.
    """
    p = sol.params
    if not 1 <= h <= p.k1 + p.k2:
        raise ValueError(f"phase must be in 1..{p.k1 + p.k2}")
    z = np.asarray(z, dtype=complex)
    near_one = np.abs(z - 1) < 1e-10
    zz = np.where(near_one, 0.5, z)
    if np.any(np.abs(zz) < 1e-12):
        raise DomainError("phase PGFs are not evaluated at z = 0")
    for pole in (1 + p.mu1 / p.lambda1, 1 + p.mu2 / p.lambda1):
        if np.any(np.abs(zz - pole) < 1e-12):
            raise DomainError(f"z = {pole} is a pole")
    for r in sol.roots:
        if np.any(np.abs(zz - r) < UNIT_ROOT_TOL):
            raise DomainError(f"z is at an interior denominator root {r}")
    vals = _phase_values(sol, zz)[h - 1]
    vals = np.where(near_one, sol.phase_mass[h - 1], vals)
    return _squeeze(vals)


def eval_pgf(sol: VacationSolution, z):
    """Queue-length PGF ``sum_h L_h(z)``."""
    p = sol.params
    return sum(eval_phase_pgf(sol, h, z) for h in range(1, p.k1 + p.k2 + 1))


def stable_queue_pmf(sol: VacationSolution, nmax: int) -> InvertedPmf:
    """Queue-length pmf on ``0..nmax`` by FFT of the PGF on the unit circle.

    Uses ``M = max(256, 8 nmax)`` samples.  Coefficients above ``-1e-10``
    are clipped at zero and the full coefficient vector rescaled to unit
    mass (the applied shift is reported).  Mass beyond ``nmax`` is returned
    as ``tail_mass``.

    Raises
    ------
    AccuracyError
        If a coefficient is below ``-1e-10`` or the coefficients sum to one
        only within more than ``1e-6``.
    """
    M = max(256, 8 * int(nmax))
    z = np.exp(2j * np.pi * np.arange(M) / M)
    vals = np.empty(M, dtype=complex)
    vals[0] = sol.phase_mass.sum()
    vals[1:] = _phase_values(sol, z[1:]).sum(axis=0)
    coef = np.fft.fft(vals).real / M
    if coef.min() < -CLIP_TOL:
        raise AccuracyError(f"inverted coefficient {coef.min():.3e} below -{CLIP_TOL}")
    coef = np.clip(coef, 0.0, None)
    total = coef.sum()
    residual = abs(total - 1.0)
    if residual > INVERSION_TOL:
        raise AccuracyError(f"inverted pmf sums to {total!r}")
    coef /= total
    pmf = coef[: nmax + 1].copy()
    return InvertedPmf(pmf=pmf, coefficients=coef, tail_mass=float(max(0.0, 1 - pmf.sum())),
                       inversion_residual=residual, renormalization_shift=total - 1.0)


def mean_waiting_q1(sol: VacationSolution) -> float:
    """Mean time from arrival to start of service, ``E[N]/lambda1 - 1/mu1``."""
    p = sol.params
    return sol.mean_queue_length / p.lambda1 - 1.0 / p.mu1


def pmf_to_csv(sol: VacationSolution, path):
    return write_csv(path, ["n", "probability"], ((n, float(v)) for n, v in enumerate(sol.pmf)))


def phase_mass_to_csv(sol: VacationSolution, path):
    return write_csv(path, ["h", "mass"],
                     ((h, float(v)) for h, v in enumerate(sol.phase_mass, start=1)))
