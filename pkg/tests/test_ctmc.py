import numpy as np
import pytest

from kpolling import ctmc
from kpolling._io import read_csv
from kpolling.errors import ConstructionError
from kpolling.model import PollingParams

P22 = PollingParams(0.2, 0.5, 1.0, 1.0, 2, 2)


@pytest.fixture(scope="module")
def gen22():
    return ctmc.build_polling_generator(P22, ctmc.TruncationSpec(40, 40))


@pytest.fixture(scope="module")
def dist22():
    return ctmc.solve_polling(P22, ctmc.TruncationSpec(60, 60))


def test_q1_visit_limit_forces_switch(gen22):
    k1 = P22.k1
    assert gen22.rate((3, 2, k1), (2, 2, k1 + 1)) == P22.mu1
    assert gen22.rate((3, 2, k1), (2, 2, k1)) == 0.0


def test_last_customer_leaves_server_idle(gen22):
    assert gen22.rate((1, 0, 1), (0, 0, 0)) == P22.mu1


def test_arrival_to_idle_system_starts_visit(gen22):
    assert gen22.rate((0, 0, 0), (0, 1, P22.k1 + 1)) == P22.lambda2
    assert gen22.rate((0, 0, 0), (1, 0, 1)) == P22.lambda1


def test_q2_completion_switches_back_to_q1(gen22):
    K = P22.k1 + P22.k2
    assert gen22.rate((2, 5, K), (2, 4, 1)) == P22.mu2
    assert gen22.rate((0, 5, K), (0, 4, P22.k1 + 1)) == P22.mu2
    assert gen22.rate((2, 5, P22.k1 + 1), (2, 4, P22.k1 + 2)) == P22.mu2


def test_generator_rows_sum_to_zero(gen22):
    assert gen22.row_sum_residual() < 1e-13


def test_states_satisfy_phase_invariants(gen22):
    n1, n2, h = gen22.states.T
    k1 = P22.k1
    assert np.all(n1[(h >= 1) & (h <= k1)] >= 1)
    assert np.all(n2[h > k1] >= 1)
    assert np.all((n1[h == 0] == 0) & (n2[h == 0] == 0))


def test_enumeration_order_is_n2_n1_h(gen22):
    s = gen22.states
    keys = list(zip(s[:, 1], s[:, 0], s[:, 2]))
    assert keys == sorted(keys)


def test_truncation_too_small():
    with pytest.raises(ConstructionError):
        ctmc.build_polling_generator(P22, ctmc.TruncationSpec(2, 10))
    with pytest.raises(ConstructionError):
        ctmc.build_polling_generator(P22, ctmc.TruncationSpec(10, 2))


def test_stationary_residual_and_mass(dist22):
    assert dist22.residual < 1e-10
    assert dist22.probs.min() >= 0
    assert dist22.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_iterative_agrees_with_direct(dist22):
    gen = ctmc.build_polling_generator(P22, ctmc.TruncationSpec(60, 60))
    it = ctmc.stationary(gen, method="iterative")
    assert it.residual < 1e-10
    assert np.abs(it.probs - dist22.probs).max() < 1e-10


def test_busy_fraction_equals_load():
    p = PollingParams(0.2, 0.3, 1.0, 1.0, 1, 2)
    dist = ctmc.solve_polling(p, ctmc.TruncationSpec(60, 60))
    assert ctmc.busy_probability(dist) == pytest.approx(p.rho, abs=1e-10)


def test_symmetric_model_gives_symmetric_pmf():
    p = PollingParams(0.3, 0.3, 1.0, 1.0, 1, 1)
    dist = ctmc.solve_polling(p, ctmc.TruncationSpec(50, 50))
    P = dist.pmf_lookup()
    swap = {1: 2, 2: 1, 0: 0}
    gap = max(abs(v - P.get((n2, n1, swap[h]), 0.0)) for (n1, n2, h), v in P.items())
    assert gap < 1e-12


def test_marginals_consistent(dist22):
    p1, p2, joint = ctmc.marginals(dist22)
    assert p1.sum() == pytest.approx(1.0) and p2.sum() == pytest.approx(1.0)
    n1 = dist22.states[:, 0]
    assert np.arange(p1.size) @ p1 == pytest.approx(n1 @ dist22.probs, rel=1e-13)
    assert np.allclose(joint.sum(axis=1), p1) and np.allclose(joint.sum(axis=0), p2)


def test_interior_balance_equations(dist22):
    res = ctmc.balance_residuals(dist22)
    assert res.size > 1000
    assert res.max() < 1e-9


def test_truncation_shift_is_small():
    dist, shift = ctmc.truncation_shift(PollingParams(0.2, 0.4, 1, 1, 1, 1),
                                        ctmc.TruncationSpec(30, 40))
    assert 0 <= shift < 1e-6
    assert dist.tail_mass < 1e-6


def test_total_count_geometric_when_rates_equal():
    p = PollingParams(0.25, 0.35, 2.0, 2.0, 1, 1)
    dist = ctmc.solve_polling(p, ctmc.TruncationSpec(80, 80))
    total = np.bincount(dist.states[:, 0] + dist.states[:, 1], weights=dist.probs)
    n = np.arange(total.size)
    assert np.abs(total - (1 - p.rho) * p.rho ** n).max() < 1e-12


def test_vacation_generator_transitions():
    p = PollingParams(0.3, 0.0, 1.0, 1.0, 2, 2)
    gen = ctmc.build_vacation_generator(p, 30)
    k1, K = p.k1, p.k1 + p.k2
    assert gen.rate((1, k1), (0, k1 + 1)) == p.mu1
    assert gen.rate((0, K), (0, k1 + 1)) == p.mu2
    assert gen.rate((3, K), (3, 1)) == p.mu2
    h = gen.states[gen.states[:, 0] == 0, 1]
    assert np.all(h > k1)


def test_csv_export(tmp_path, dist22):
    path = ctmc.to_csv(dist22, tmp_path / "pi.csv")
    rows = read_csv(path)
    assert list(rows[0]) == ["n1", "n2", "h", "probability"]
    assert len(rows) == dist22.states.shape[0]
    assert sum(float(r["probability"]) for r in rows) == pytest.approx(1.0, abs=1e-12)
