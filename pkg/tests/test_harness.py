import math

import numpy as np
import pytest

from kpolling import ctmc, harness
from kpolling._io import read_csv
from kpolling.errors import InvalidParameterError
from kpolling.model import PerturbationPath

ADMISSIBLE = [
    PerturbationPath(0.3, 1.0, 1.0, 1, 1),
    PerturbationPath(0.2, 1.0, 1.0, 1, 2),
    PerturbationPath(0.3, 1.0, 1.0, 2, 1),
    PerturbationPath(0.2, 1.0, 1.0, 2, 2),
]
CANONICAL = PerturbationPath(0.5, 1.0, 1.0, 1, 1)
DELTAS = [0.1, 0.05, 0.02]


def _pid(p):
    return f"lam1={p.lambda1}-k1={p.k1}-k2={p.k2}"


def test_total_variation_basics():
    assert harness.total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert harness.total_variation([1.0], [0.0, 1.0]) == 1.0
    assert harness.total_variation([0.2, 0.8], [0.6, 0.4]) == pytest.approx(0.4)
    assert harness.total_variation([[0.5, 0.5]], [[0.5], [0.5]]) == pytest.approx(0.5)


def test_lattice_ks_of_discretized_exponential():
    eta, d = 1.3, 0.05
    n = np.arange(4000)
    pmf = np.exp(-eta * d * n) * -np.expm1(-eta * d)
    assert harness.lattice_ks(pmf, d, eta) == pytest.approx(-math.expm1(-eta * d), rel=1e-12)


def test_independence_gap():
    p = np.array([0.5, 0.3, 0.2])
    q = np.array([0.6, 0.3, 0.1])
    assert harness.independence_gap(np.outer(p, q), 0.1) < 1e-15
    assert harness.independence_gap(np.diag([0.5, 0.5]), 1.0) == pytest.approx(0.25)


@pytest.fixture(scope="module")
def reports():
    return {p: harness.converge_exact(p, DELTAS) for p in ADMISSIBLE}


@pytest.mark.slow
@pytest.mark.parametrize("path", ADMISSIBLE, ids=_pid)
def test_exact_metrics_decrease_and_are_small(path, reports):
    rep = reports[path]
    for col in ("tv_n1", "ks_xi", "indep_gap"):
        v = rep.column(col)
        assert np.all(np.diff(v) < 0), (col, v)
        assert v[-1] < 0.08
    assert all(r.reliable for r in rep.rows)
    for r in rep.rows:
        assert r.n2max == math.ceil(12 / (rep.eta * r.delta))


@pytest.mark.slow
def test_metrics_lie_in_unit_interval(reports):
    for rep in reports.values():
        for col in ("tv_n1", "ks_xi", "indep_gap"):
            v = rep.column(col)
            assert np.all((v >= 0) & (v <= 1))


def test_small_truncation_is_flagged():
    rep = harness.converge_exact(ADMISSIBLE[0], [0.1],
                                 trunc_rule=lambda d, eta: ctmc.TruncationSpec(8, 10))
    assert rep.rows[0].tail_mass > harness.TAIL_FLAG and not rep.rows[0].reliable


@pytest.mark.xfail(raises=InvalidParameterError, strict=True,
                   reason="lambda1/k1 = lambda2*/k2 on this set; no limit law to compare with")
def test_canonical_set_small_delta_beats_large_delta():
    rep = harness.converge_exact(CANONICAL, [0.1, 0.02])
    for col in ("tv_n1", "ks_xi", "indep_gap"):
        assert rep.column(col)[1] < rep.column(col)[0]


@pytest.mark.xfail(raises=InvalidParameterError, strict=True,
                   reason="lambda1/k1 = lambda2*/k2 on this set; no limit law to compare with")
def test_canonical_set_simulated_metrics_small_at_delta_001():
    rep = harness.converge_sim(CANONICAL, [0.01])
    assert all(rep.column(c)[0] < 0.05 for c in ("tv_n1", "ks_xi", "indep_gap"))


def fixed_rule(delta, eta, replication):
    return dict(horizon=1e6, warmup=1e4, seed=100 + replication, batches=20)


def long_rule(delta, eta, replication):
    return dict(horizon=4e6, warmup=4e4, seed=200 + replication, batches=20)


def shifted_rule(delta, eta, replication):
    return dict(horizon=1e6, warmup=1e4, seed=300 + replication, batches=20)


@pytest.fixture(scope="module")
def sim_report():
    return harness.converge_sim(ADMISSIBLE[2], [0.05], fixed_rule, replications=4)


@pytest.mark.slow
def test_simulated_metrics_agree_with_exact(sim_report):
    sim_row = sim_report.rows[0]
    exact = harness.converge_exact(ADMISSIBLE[2], [0.05]).rows[0]
    for col in ("tv_n1", "ks_xi", "indep_gap"):
        assert abs(getattr(sim_row, col) - getattr(exact, col)) <= getattr(sim_row, col + "_hw")


@pytest.mark.slow
def test_seed_spread_within_ci(sim_report):
    other = harness.converge_sim(ADMISSIBLE[2], [0.05], shifted_rule, replications=4).rows[0]
    row = sim_report.rows[0]
    for col in ("tv_n1", "ks_xi", "indep_gap"):
        hw = getattr(row, col + "_hw") + getattr(other, col + "_hw")
        assert abs(getattr(row, col) - getattr(other, col)) <= hw


@pytest.mark.slow
def test_simulated_metrics_small_at_delta_001():
    row = harness.converge_sim(ADMISSIBLE[2], [0.01], long_rule, replications=2).rows[0]
    assert row.reliable
    assert max(row.tv_n1, row.ks_xi, row.indep_gap) < 0.05


def fixed_small_rule(delta, eta, replication):
    return dict(horizon=2e4, warmup=200, seed=replication, batches=20)


@pytest.mark.filterwarnings("ignore:only .* regenerations:RuntimeWarning")
def test_parallel_matches_serial():
    serial = harness.converge_sim(ADMISSIBLE[0], [0.2, 0.1], fixed_small_rule, replications=2)
    parallel = harness.converge_sim(ADMISSIBLE[0], [0.2, 0.1], fixed_small_rule,
                                    replications=2, workers=2)
    assert [r.as_tuple() for r in serial.rows] == [r.as_tuple() for r in parallel.rows]


def test_report_csv(tmp_path):
    rep = harness.converge_exact(ADMISSIBLE[0], [0.2, 0.1])
    rows = read_csv(rep.to_csv(tmp_path / "c.csv"))
    assert list(rows[0]) == harness.COLUMNS
    assert [float(r["delta"]) for r in rows] == [0.2, 0.1]
    assert rows[0]["source"] == "exact" and rows[0]["horizon"] == ""
