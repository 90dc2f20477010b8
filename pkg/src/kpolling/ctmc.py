"""Exact stationary analysis of the polling model on a truncated state space.

States are triples ``(n1, n2, h)``.  ``h`` in ``1..k1`` means the server is
serving the h-th customer of the current Q1 visit, ``h`` in
``k1+1..k1+k2`` the ``(h-k1)``-th customer of the current Q2 visit, and
``h = 0`` marks the idle server with both queues empty.  Arrivals that would
push a queue past its cap are discarded, so the truncated chain is still a
proper CTMC.

The same machinery builds the generator of the k1-limited queue with
Erlang-k2 vacations, whose states are pairs ``(n, h)``; it serves as the
brute-force reference for :mod:`kpolling.vacation`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._io import write_csv
from .errors import ConstructionError, NumericalError
from .model import PollingParams

RESIDUAL_TOL = 1e-10
# sparse LU stays faster than ILU-GMRES well past 2e5 states on these banded chains
DIRECT_MAX_STATES = 1_000_000


@dataclass(frozen=True)
class TruncationSpec:
    n1max: int
    n2max: int

    boundary_policy = "reflecting"


@dataclass
class Generator:
    """Sparse rate matrix ``Q`` over an explicit list of states.

    ``states`` has one row per state; columns are ``(n1, n2, h)`` for the
    polling chain and ``(n, h)`` for the vacation chain.
    """

    Q: sp.csr_matrix
    states: np.ndarray
    kind: str
    params: PollingParams
    truncation: object

    def __post_init__(self):
        self.index = {tuple(s): i for i, s in enumerate(self.states.tolist())}

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def rate(self, src, dst) -> float:
        return self.Q[self.index[tuple(src)], self.index[tuple(dst)]]

    def row_sum_residual(self) -> float:
        return float(np.abs(np.asarray(self.Q.sum(axis=1))).max())


def _polling_moves(s, p, n1max, n2max):
    n1, n2, h = s
    k1, k2 = p.k1, p.k2
    if h == 0:
        out = []
        if p.lambda1 > 0:
            out.append(((1, 0, 1), p.lambda1))
        if p.lambda2 > 0:
            out.append(((0, 1, k1 + 1), p.lambda2))
        return out
    out = []
    if n1 < n1max and p.lambda1 > 0:
        out.append(((n1 + 1, n2, h), p.lambda1))
    if n2 < n2max and p.lambda2 > 0:
        out.append(((n1, n2 + 1, h), p.lambda2))
    if h <= k1:
        m = n1 - 1
        if h < k1 and m >= 1:
            nxt = (m, n2, h + 1)
        elif n2 >= 1:
            nxt = (m, n2, k1 + 1)
        elif m >= 1:
            nxt = (m, n2, 1)
        else:
            nxt = (0, 0, 0)
        out.append((nxt, p.mu1))
    else:
        m = n2 - 1
        if h < k1 + k2 and m >= 1:
            nxt = (n1, m, h + 1)
        elif n1 >= 1:
            nxt = (n1, m, 1)
        elif m >= 1:
            nxt = (n1, m, k1 + 1)
        else:
            nxt = (0, 0, 0)
        out.append((nxt, p.mu2))
    return out


def _vacation_moves(s, p, nmax):
    n, h = s
    k1, k2 = p.k1, p.k2
    out = []
    if n < nmax and p.lambda1 > 0:
        out.append(((n + 1, h), p.lambda1))
    if h <= k1:
        m = n - 1
        nxt = (m, h + 1) if (h < k1 and m >= 1) else (m, k1 + 1)
        out.append((nxt, p.mu1))
    elif h < k1 + k2:
        out.append(((n, h + 1), p.mu2))
    else:
        out.append(((n, 1) if n >= 1 else (n, k1 + 1), p.mu2))
    return out


def _assemble(start, moves, sort_key):
    seen = {start: None}
    queue = deque([start])
    edges = []
    while queue:
        s = queue.popleft()
        for t, r in moves(s):
            edges.append((s, t, r))
            if t not in seen:
                seen[t] = None
                queue.append(t)
    states = sorted(seen, key=sort_key)
    index = {s: i for i, s in enumerate(states)}
    rows = np.fromiter((index[e[0]] for e in edges), dtype=np.int64, count=len(edges))
    cols = np.fromiter((index[e[1]] for e in edges), dtype=np.int64, count=len(edges))
    rates = np.fromiter((e[2] for e in edges), dtype=float, count=len(edges))
    n = len(states)
    off = sp.coo_matrix((rates, (rows, cols)), shape=(n, n)).tocsr()
    off.setdiag(0.0)
    off.eliminate_zeros()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sp.diags(diag)).tocsr()
    return Q, np.array(states, dtype=np.int64)


def build_polling_generator(params: PollingParams, trunc: TruncationSpec) -> Generator:
    """Generator of ``(N1, N2, H)`` on the states reachable from the empty system.

    States are ordered lexicographically by ``(n2, n1, h)`` so that long
    Q2 truncations give a banded matrix.
    """
    if trunc.n1max < params.k1 + 1 or trunc.n2max < params.k2 + 1:
        raise ConstructionError(
            f"truncation ({trunc.n1max}, {trunc.n2max}) must be at least "
            f"({params.k1 + 1}, {params.k2 + 1})")
    Q, states = _assemble(
        (0, 0, 0),
        lambda s: _polling_moves(s, params, trunc.n1max, trunc.n2max),
        lambda s: (s[1], s[0], s[2]),
    )
    return Generator(Q, states, "polling", params, trunc)


def build_vacation_generator(params: PollingParams, nmax: int) -> Generator:
    """Generator of the k1-limited queue with Erlang(k2, mu2) multiple vacations.

    Only ``lambda1``, ``mu1``, ``mu2``, ``k1``, ``k2`` of ``params`` are used.
    The chain starts in the first vacation stage with an empty queue.
    """
    if nmax < params.k1 + 1:
        raise ConstructionError(f"nmax must be at least k1 + 1 = {params.k1 + 1}")
    Q, states = _assemble(
        (0, params.k1 + 1),
        lambda s: _vacation_moves(s, params, nmax),
        lambda s: s,
    )
    return Generator(Q, states, "vacation", params, nmax)


@dataclass
class StationaryDistribution:
    """Stationary probabilities of a truncated chain.

    ``tail_mass`` is the probability of the outer tenth of each truncated
    coordinate and serves as a proxy for the truncation error.
    """

    states: np.ndarray
    probs: np.ndarray
    truncation: object
    params: PollingParams
    kind: str
    residual: float
    tail_mass: float

    @property
    def pmf(self) -> dict:
        return {tuple(s): float(p) for s, p in zip(self.states.tolist(), self.probs)}

    def prob(self, *state) -> float:
        return self.pmf_lookup().get(tuple(state), 0.0)

    def pmf_lookup(self) -> dict:
        cache = getattr(self, "_lookup", None)
        if cache is None:
            cache = self.pmf
            self._lookup = cache
        return cache


def _reduced(Q, anchor=0):
    # pin pi[anchor] = 1 and drop its balance equation; normalize afterwards
    At = Q.T.tocsc()
    keep = np.ones(Q.shape[0], dtype=bool)
    keep[anchor] = False
    A = At[keep][:, keep].tocsc()
    b = -At[keep][:, [anchor]].toarray().ravel()
    return A, b, keep


def _expand(x, keep, anchor=0):
    pi = np.empty(keep.size)
    pi[anchor] = 1.0
    pi[keep] = x
    return pi / pi.sum()


def _solve_direct(Q):
    A, b, keep = _reduced(Q)
    lu = spla.splu(A, permc_spec="COLAMD")
    x = lu.solve(b)
    for _ in range(2):
        r = b - A @ x
        if np.abs(r).max() < 1e-16:
            break
        x = x + lu.solve(r)
    return _expand(x, keep)


def _solve_iterative(Q):
    A, b, keep = _reduced(Q)
    ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
    M = spla.LinearOperator(A.shape, ilu.solve)
    x, info = spla.gmres(A, b, M=M, rtol=1e-14, atol=0.0, restart=200, maxiter=2000)
    if info != 0:
        raise NumericalError(f"GMRES did not converge (info={info})",
                             residual=float(np.abs(b - A @ x).max()))
    return _expand(x, keep)


def _tail_mass(states, probs, kind, truncation):
    if kind == "polling":
        c1 = int(np.ceil(0.9 * truncation.n1max))
        c2 = int(np.ceil(0.9 * truncation.n2max))
        mask = (states[:, 0] >= c1) | (states[:, 1] >= c2)
    else:
        mask = states[:, 0] >= int(np.ceil(0.9 * truncation))
    return float(probs[mask].sum())


def stationary(gen: Generator, method: str = "auto") -> StationaryDistribution:
    """Solve ``pi Q = 0`` with ``sum(pi) = 1``.

    Parameters
    ----------
    gen : Generator
    method : {"auto", "direct", "iterative"}
        "direct" is a sparse LU of the balance equations with the idle
        state's probability pinned (its own equation is redundant) followed
        by normalization; "iterative" is ILU-preconditioned GMRES on the
        same system.  "auto" picks direct below
        ``DIRECT_MAX_STATES`` states.

    Raises
    ------
    NumericalError
        If ``max |pi Q|`` exceeds ``RESIDUAL_TOL`` or the solution has
        significantly negative entries.
    """
    if method == "auto":
        method = "direct" if gen.size <= DIRECT_MAX_STATES else "iterative"
    if method == "direct":
        try:
            pi = _solve_direct(gen.Q)
        except RuntimeError as exc:
            raise NumericalError(f"sparse LU failed: {exc}") from exc
    elif method == "iterative":
        pi = _solve_iterative(gen.Q)
    else:
        raise ValueError(f"unknown method {method!r}")
    if pi.min() < -1e-12:
        raise NumericalError(f"solution has negative entries (min {pi.min():.3e})",
                             residual=float(np.abs(gen.Q.T @ pi).max()))
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.abs(gen.Q.T @ pi).max())
    if residual > RESIDUAL_TOL:
        raise NumericalError(f"stationary residual {residual:.3e} exceeds {RESIDUAL_TOL}",
                             residual=residual)
    return StationaryDistribution(
        states=gen.states, probs=pi, truncation=gen.truncation, params=gen.params,
        kind=gen.kind, residual=residual,
        tail_mass=_tail_mass(gen.states, pi, gen.kind, gen.truncation))


def solve_polling(params: PollingParams, trunc: TruncationSpec, method="auto"):
    return stationary(build_polling_generator(params, trunc), method=method)


def solve_vacation(params: PollingParams, nmax: int, method="auto"):
    return stationary(build_vacation_generator(params, nmax), method=method)


def marginals(dist: StationaryDistribution):
    """Return ``(pmf of N1, pmf of N2, joint pmf of (N1, N2))`` as arrays."""
    if dist.kind != "polling":
        raise ValueError("marginals() needs a polling-chain distribution")
    n1, n2 = dist.states[:, 0], dist.states[:, 1]
    joint = np.zeros((n1.max() + 1, n2.max() + 1))
    np.add.at(joint, (n1, n2), dist.probs)
    return joint.sum(axis=1), joint.sum(axis=0), joint


def queue_marginal(dist: StationaryDistribution) -> np.ndarray:
    """Queue-length pmf of a vacation-chain distribution."""
    if dist.kind != "vacation":
        raise ValueError("queue_marginal() needs a vacation-chain distribution")
    n = dist.states[:, 0]
    return np.bincount(n, weights=dist.probs)


def busy_probability(dist: StationaryDistribution) -> float:
    h = dist.states[:, -1]
    return float(dist.probs[h > 0].sum()) if dist.kind == "polling" else float(
        dist.probs[h <= dist.params.k1].sum())


def truncation_shift(params: PollingParams, trunc: TruncationSpec, method="auto"):
    """Solve at ``trunc`` and at doubled caps; return the coarse solution and
    the largest absolute change of any probability it reports."""
    coarse = solve_polling(params, trunc, method)
    fine = solve_polling(params, TruncationSpec(2 * trunc.n1max, 2 * trunc.n2max), method)
    lookup = fine.pmf_lookup()
    shift = max(abs(p - lookup.get(s, 0.0)) for s, p in zip(map(tuple, coarse.states.tolist()),
                                                            coarse.probs))
    return coarse, float(shift)


def balance_residuals(dist: StationaryDistribution) -> np.ndarray:
    """Relative residuals of the interior balance equations (``n2 >= 2``).

    Each equation is written out state by state, independently of the generator:
    total outflow of a state equals inflow from its neighbours.  States on or
    next to the truncation boundary are skipped because discarded arrivals
    change their outflow rate.  Equations whose probabilities underflow below
    ``1e-250`` are skipped.
    """
    p = dist.params
    l1, l2, m1, m2, k1, k2 = p.lambda1, p.lambda2, p.mu1, p.mu2, p.k1, p.k2
    K = k1 + k2
    N1, N2 = dist.truncation.n1max, dist.truncation.n2max
    P = dist.pmf_lookup()

    def q(a, b, h):
        return P.get((a, b, h), 0.0)

    out = []

    def push(lhs, rhs):
        scale = max(abs(lhs), abs(rhs))
        if scale > 1e-250:
            out.append(abs(lhs - rhs) / scale)

    for n2 in range(2, N2):
        # empty Q1, Q2 being served
        push((l1 + l2 + m2) * q(0, n2, k1 + 1),
             l2 * q(0, n2 - 1, k1 + 1) + m2 * q(0, n2 + 1, K)
             + sum(m1 * q(1, n2, h) for h in range(1, k1 + 1)))
        for h2 in range(k1 + 2, K + 1):
            push((l1 + l2 + m2) * q(0, n2, h2),
                 l2 * q(0, n2 - 1, h2) + m2 * q(0, n2 + 1, h2 - 1))
        # one customer in Q1, being served
        push((l1 + l2 + m1) * q(1, n2, 1),
             l2 * q(1, n2 - 1, 1) + m2 * q(1, n2 + 1, K))
        for h1 in range(2, k1 + 1):
            push((l1 + l2 + m1) * q(1, n2, h1),
                 l2 * q(1, n2 - 1, h1) + m1 * q(2, n2, h1 - 1))
        for n1 in range(1, N1 - 1):
            push((l1 + l2 + m1) * q(n1 + 1, n2, 1),
                 l1 * q(n1, n2, 1) + l2 * q(n1 + 1, n2 - 1, 1) + m2 * q(n1 + 1, n2 + 1, K))
            for h1 in range(2, k1 + 1):
                push((l1 + l2 + m1) * q(n1 + 1, n2, h1),
                     l1 * q(n1, n2, h1) + l2 * q(n1 + 1, n2 - 1, h1)
                     + m1 * q(n1 + 2, n2, h1 - 1))
        for n1 in range(1, N1):
            push((l1 + l2 + m2) * q(n1, n2, k1 + 1),
                 l1 * q(n1 - 1, n2, k1 + 1) + l2 * q(n1, n2 - 1, k1 + 1)
                 + m1 * q(n1 + 1, n2, k1))
            for h2 in range(k1 + 2, K + 1):
                push((l1 + l2 + m2) * q(n1, n2, h2),
                     l1 * q(n1 - 1, n2, h2) + l2 * q(n1, n2 - 1, h2)
                     + m2 * q(n1, n2 + 1, h2 - 1))
    return np.array(out)


def to_csv(dist: StationaryDistribution, path):
    if dist.kind == "polling":
        header = ["n1", "n2", "h", "probability"]
    else:
        header = ["n", "h", "probability"]
    rows = ([*s, float(p)] for s, p in zip(dist.states.tolist(), dist.probs))
    return write_csv(path, header, rows)
