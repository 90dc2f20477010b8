"""Discrete-event simulation of the two-queue k-limited polling system.

The simulator is written independently of the CTMC generator so that the two
can check each other.  Each random process (arrivals to Q1, arrivals to Q2,
services at Q1, services at Q2) draws from its own stream spawned from one
``SeedSequence``; runs with the same seed at different ``delta`` share
common random numbers.

All queue-length statistics are time averages over ``[warmup, horizon]``;
confidence half-widths come from batch means over equal-length batches.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import stats

from ._io import write_csv
from .errors import InvalidParameterError, UnstableSystemError
from .model import PerturbationPath, PollingParams, realize

REGENERATIONS_PER_BATCH = 100


@dataclass(frozen=True)
class SimConfig:
    params: PollingParams
    horizon: float
    warmup: float = 0.0
    seed: int = 0
    batches: int = 20
    delta: float | None = None

    def __post_init__(self):
        if not self.horizon > self.warmup >= 0:
            raise InvalidParameterError("need horizon > warmup >= 0")
        if self.batches < 2:
            raise InvalidParameterError("need at least two batches")


class Estimate(NamedTuple):
    value: float
    half_width: float

    def covers(self, x, widths=1.0) -> bool:
        return abs(self.value - x) <= widths * self.half_width


@dataclass
class SimEstimate:
    config: SimConfig
    joint_pmf: np.ndarray
    mean_n1: Estimate
    mean_n2: Estimate
    mean_wait1: Estimate
    mean_wait2: Estimate
    mean_sojourn1: Estimate
    mean_sojourn2: Estimate
    busy_fraction: Estimate
    visit_sizes1: np.ndarray
    visit_sizes2: np.ndarray
    regenerations: int
    short_horizon: bool
    scaled_n2: tuple | None = None
    mean_scaled_n2: Estimate | None = None
    batch_means: dict = field(default_factory=dict, repr=False)

    @property
    def pmf_n1(self) -> np.ndarray:
        return self.joint_pmf.sum(axis=1)

    @property
    def pmf_n2(self) -> np.ndarray:
        return self.joint_pmf.sum(axis=0)

    def full_visit_fraction(self, queue: int) -> float:
        """Fraction of completed visits to ``queue`` that served exactly ``k_queue``."""
        sizes = self.visit_sizes1 if queue == 1 else self.visit_sizes2
        k = self.config.params.k1 if queue == 1 else self.config.params.k2
        total = sizes.sum()
        return float(sizes[k] / total) if total else math.nan


def _exp_stream(rng, block=1 << 15):
    while True:
        yield from rng.standard_exponential(block).tolist()


def _estimate(samples) -> Estimate:
    x = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(x)):
        return Estimate(math.nan, math.nan)
    b = x.size
    q = stats.t.ppf(0.975, b - 1)
    return Estimate(float(x.mean()), float(q * x.std(ddof=1) / math.sqrt(b)))


def _ratio(num, den):
    return [n / d if d > 0 else math.nan for n, d in zip(num, den)]


def _simulate(cfg: SimConfig):
    p = cfg.params
    lam1, lam2, mu1, mu2, k1, k2 = p.lambda1, p.lambda2, p.mu1, p.mu2, p.k1, p.k2
    K = k1 + k2
    streams = [_exp_stream(np.random.default_rng(s))
               for s in np.random.SeedSequence(cfg.seed).spawn(4)]
    a1, a2, s1, s2 = (g.__next__ for g in streams)
    inf = math.inf
    horizon, start = float(cfg.horizon), float(cfg.warmup)
    B = cfg.batches
    L = (horizon - start) / B

    area1 = [0.0] * B
    area2 = [0.0] * B
    busy = [0.0] * B
    wsum = [[0.0] * B, [0.0] * B]
    wcnt = [[0] * B, [0] * B]
    tsum = [[0.0] * B, [0.0] * B]
    tcnt = [[0] * B, [0] * B]
    joint = {}
    vis1 = [0] * (k1 + 1)
    vis2 = [0] * (k2 + 1)
    regen = 0

    q1, q2 = deque(), deque()
    n1 = n2 = h = 0
    cur_arr = 0.0
    t = 0.0
    na1 = a1() / lam1 if lam1 > 0 else inf
    na2 = a2() / lam2 if lam2 > 0 else inf
    nd = inf
    batch = 0
    bend = start + L

    def bidx(x):
        i = int((x - start) / L)
        return i if i < B else B - 1

    while True:
        if na1 <= na2 and na1 <= nd:
            te, ev = na1, 0
        elif na2 <= nd:
            te, ev = na2, 1
        else:
            te, ev = nd, 2
        stop = te > horizon
        if stop:
            te = horizon
        # time-weighted accumulation of the state held on [t, te)
        if te > start:
            lo = t if t > start else start
            key = (n1, n2)
            sv = 1.0 if h else 0.0
            while te > bend and batch < B - 1:
                seg = bend - lo
                area1[batch] += n1 * seg
                area2[batch] += n2 * seg
                busy[batch] += sv * seg
                joint[key] = joint.get(key, 0.0) + seg
                lo = bend
                batch += 1
                bend = start + (batch + 1) * L
            seg = te - lo
            area1[batch] += n1 * seg
            area2[batch] += n2 * seg
            busy[batch] += sv * seg
            joint[key] = joint.get(key, 0.0) + seg
        if stop:
            break
        t = te
        rec = t >= start
        if ev == 0:
            n1 += 1
            q1.append(t)
            na1 = t + a1() / lam1
            if h == 0:
                h = 1
                cur_arr = q1.popleft()
                nd = t + s1() / mu1
                if rec:
                    b = bidx(t)
                    wcnt[0][b] += 1
        elif ev == 1:
            n2 += 1
            q2.append(t)
            na2 = t + a2() / lam2
            if h == 0:
                h = k1 + 1
                cur_arr = q2.popleft()
                nd = t + s2() / mu2
                if rec:
                    b = bidx(t)
                    wcnt[1][b] += 1
        elif h <= k1:
            n1 -= 1
            if rec:
                b = bidx(t)
                tsum[0][b] += t - cur_arr
                tcnt[0][b] += 1
            if h < k1 and n1 >= 1:
                h += 1
            else:
                if rec:
                    vis1[h] += 1
                if n2 >= 1:
                    h = k1 + 1
                elif n1 >= 1:
                    h = 1
                else:
                    h = 0
            if h == 0:
                nd = inf
                if rec:
                    regen += 1
            elif h <= k1:
                cur_arr = q1.popleft()
                nd = t + s1() / mu1
                if rec:
                    b = bidx(t)
                    wsum[0][b] += t - cur_arr
                    wcnt[0][b] += 1
            else:
                cur_arr = q2.popleft()
                nd = t + s2() / mu2
                if rec:
                    b = bidx(t)
                    wsum[1][b] += t - cur_arr
                    wcnt[1][b] += 1
        else:
            n2 -= 1
            if rec:
                b = bidx(t)
                tsum[1][b] += t - cur_arr
                tcnt[1][b] += 1
            if h < K and n2 >= 1:
                h += 1
            else:
                if rec:
                    vis2[h - k1] += 1
                if n1 >= 1:
                    h = 1
                elif n2 >= 1:
                    h = k1 + 1
                else:
                    h = 0
            if h == 0:
                nd = inf
                if rec:
                    regen += 1
            elif h <= k1:
                cur_arr = q1.popleft()
                nd = t + s1() / mu1
                if rec:
                    b = bidx(t)
                    wsum[0][b] += t - cur_arr
                    wcnt[0][b] += 1
            else:
                cur_arr = q2.popleft()
                nd = t + s2() / mu2
                if rec:
                    b = bidx(t)
                    wsum[1][b] += t - cur_arr
                    wcnt[1][b] += 1

    return dict(L=L, area1=area1, area2=area2, busy=busy, wsum=wsum, wcnt=wcnt,
                tsum=tsum, tcnt=tcnt, joint=joint, vis1=vis1, vis2=vis2, regen=regen)


def run(config: SimConfig) -> SimEstimate:
    """Simulate ``config.params`` and summarize the stationary behaviour.

    Raises
    ------
    UnstableSystemError
        If the load is not below one.
    """
    p = config.params
    if p.rho >= 1:
        raise UnstableSystemError(f"load {p.rho} >= 1; the simulation would not settle")
    raw = _simulate(config)
    L = raw["L"]
    total = L * config.batches
    keys = np.array(list(raw["joint"]), dtype=np.int64).reshape(-1, 2)
    vals = np.array(list(raw["joint"].values()))
    joint = np.zeros((keys[:, 0].max() + 1, keys[:, 1].max() + 1))
    joint[keys[:, 0], keys[:, 1]] = vals
    joint /= joint.sum()

    batch = {
        "n1": [a / L for a in raw["area1"]],
        "n2": [a / L for a in raw["area2"]],
        "busy": [a / L for a in raw["busy"]],
        "wait1": _ratio(raw["wsum"][0], raw["wcnt"][0]),
        "wait2": _ratio(raw["wsum"][1], raw["wcnt"][1]),
        "sojourn1": _ratio(raw["tsum"][0], raw["tcnt"][0]),
        "sojourn2": _ratio(raw["tsum"][1], raw["tcnt"][1]),
    }
    short = raw["regen"] < config.batches * REGENERATIONS_PER_BATCH
    if short:
        warnings.warn(f"only {raw['regen']} regenerations in {total:g} time units; "
                      "batch-means half-widths may be unreliable", RuntimeWarning, stacklevel=2)
    est = SimEstimate(
        config=config,
        joint_pmf=joint,
        mean_n1=_estimate(batch["n1"]),
        mean_n2=_estimate(batch["n2"]),
        mean_wait1=_estimate(batch["wait1"]),
        mean_wait2=_estimate(batch["wait2"]),
        mean_sojourn1=_estimate(batch["sojourn1"]),
        mean_sojourn2=_estimate(batch["sojourn2"]),
        busy_fraction=_estimate(batch["busy"]),
        visit_sizes1=np.array(raw["vis1"]),
        visit_sizes2=np.array(raw["vis2"]),
        regenerations=raw["regen"],
        short_horizon=short,
        batch_means=batch,
    )
    if config.delta is not None:
        d = config.delta
        pmf2 = est.pmf_n2
        est.scaled_n2 = (d * np.arange(pmf2.size), pmf2)
        est.mean_scaled_n2 = _estimate([d * x for x in batch["n2"]])
    return est


def run_scaled(path: PerturbationPath, delta: float, config: SimConfig) -> SimEstimate:
    """Simulate the path at ``delta``; ``config.params`` is replaced.

    The scaled histogram has bins of width ``delta`` at ``delta * n2``.
    """
    cfg = replace(config, params=realize(path, delta), delta=delta)
    return run(cfg)


def joint_pmf_to_csv(est: SimEstimate, path):
    rows = ((int(i), int(j), float(est.joint_pmf[i, j]))
            for i, j in zip(*np.nonzero(est.joint_pmf)))
    return write_csv(path, ["n1", "n2", "probability"], rows)


def scaled_to_csv(est: SimEstimate, path):
    if est.scaled_n2 is None:
        raise ValueError("no scaled histogram; run with a delta")
    xi, w = est.scaled_n2
    return write_csv(path, ["xi", "probability"], zip(map(float, xi), map(float, w)))


def summary_rows(est: SimEstimate):
    rows = []
    for name in ("mean_n1", "mean_n2", "mean_wait1", "mean_wait2", "mean_sojourn1",
                 "mean_sojourn2", "busy_fraction", "mean_scaled_n2"):
        e = getattr(est, name)
        if e is not None:
            rows.append((name, float(e.value), float(e.half_width)))
    return rows


def summary_to_csv(est: SimEstimate, path):
    return write_csv(path, ["statistic", "estimate", "half_width"], summary_rows(est))
