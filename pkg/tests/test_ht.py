import math

import numpy as np
import pytest

from kpolling import ht
from kpolling.errors import DomainError, InvalidParameterError
from kpolling.model import PerturbationPath


def test_eta_canonical_values():
    assert ht.compute_eta(0.5, 1, 1, 1) == 1.0
    assert ht.workload_heuristic_eta(0.5, 0.5, 1, 1) == 1.0


def test_eta_matches_reciprocal_form_with_default_omega():
    lam1, mu1, mu2 = 0.3, 1.5, 0.7
    inv = 1 - lam1 / mu1 + mu2 * lam1 / mu1 ** 2
    assert ht.compute_eta(lam1, mu1, mu2) == pytest.approx(1 / inv, rel=1e-14)


def test_eta_linear_in_omega():
    assert ht.compute_eta(0.3, 1, 2, 4.0) == pytest.approx(2 * ht.compute_eta(0.3, 1, 2, 2.0))


def test_eta_needs_stable_q1():
    with pytest.raises(InvalidParameterError):
        ht.compute_eta(1.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def limit():
    return ht.heavy_traffic_limit(PerturbationPath(0.3, 1.0, 2.0, 2, 1), nmax=200)


def test_limit_requires_admissible_path():
    with pytest.raises(InvalidParameterError):
        ht.heavy_traffic_limit(PerturbationPath(0.5, 1, 1, 1, 1))


def test_joint_cdf_marginals(limit):
    assert ht.joint_limit_cdf(limit, 3, 0.0) == 0.0
    assert ht.joint_limit_cdf(limit, 3, 1e3) == pytest.approx(limit.vacation_cdf[3])
    # tail below 1e-9 here, so the far-n1 value is a point, not an interval
    far = ht.joint_limit_cdf(limit, 10 ** 6, 0.7)
    assert far == pytest.approx(-math.expm1(-limit.eta * 0.7), abs=1e-9)


def test_joint_cdf_monotone_and_bounded(limit):
    n1 = np.arange(0, 15)
    xi = np.linspace(0, 5, 21)
    F = np.array([[ht.joint_limit_cdf(limit, int(n), float(x)) for x in xi] for n in n1])
    assert np.all(np.diff(F, axis=0) >= 0) and np.all(np.diff(F, axis=1) >= 0)
    assert np.all(F <= limit.vacation_cdf[n1][:, None] + 1e-15)
    assert np.all(F <= -np.expm1(-limit.eta * xi)[None, :] + 1e-15)


def test_negative_xi_is_a_domain_error(limit):
    with pytest.raises(DomainError):
        ht.joint_limit_cdf(limit, 0, -0.1)


def test_interval_when_tail_is_not_negligible():
    lim = ht.heavy_traffic_limit(PerturbationPath(0.6, 1.0, 1.0, 3, 1), nmax=10)
    assert lim.tail_mass > ht.TAIL_POINT_TOL
    v = ht.joint_limit_cdf(lim, 50, 1.0)
    assert isinstance(v, ht.CdfInterval) and v.lo < v.hi


def test_scaled_wait_rate():
    lim = ht.heavy_traffic_limit(PerturbationPath(0.5, 1, 1, 2, 1), nmax=50)
    assert lim.eta == 1.0
    assert ht.scaled_wait_q2_rate(lim) == pytest.approx(0.5)
    assert ht.scaled_wait_q2_rate(lim, 0.25) == pytest.approx(0.25)


def test_density_integrates_to_one():
    from scipy.integrate import quad
    val, _ = quad(lambda x: ht.density(1.7, x), 0, np.inf)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_cdf_table_csv(tmp_path, limit):
    path = ht.cdf_table_to_csv(limit, range(3), [0.5, 1.0], tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "n1,xi,cdf_lo,cdf_hi" and len(lines) == 7
