import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmmht import InvalidArgument
from rmmht.oracles import degenerate_rcmkf_deviation, kf_reference, moment_law_check, random_spd
from rmmht.rcmkf import (Belief, DiscreteMatrixDistribution, effective_meas_cov,
                         effective_process_cov, innovation_inverse, mean_matrix, predict,
                         update)


def test_singleton_distribution_reduces_to_kf():
    rng = np.random.default_rng(1)
    assert degenerate_rcmkf_deviation(rng, steps=50) <= 1e-10


def test_effective_cov_two_realizations_by_hand():
    # scalar: F in {1, 3} w.p. 1/2, q in {1, 2}; Fbar = 2, E[x^2] = 5
    d = DiscreteMatrixDistribution(np.array([[[1.0]], [[3.0]]]), np.array([[[1.0]], [[2.0]]]),
                                   np.array([0.5, 0.5]))
    # 0.5*(1 + 1*5) + 0.5*(2 + 1*5) = 6.5
    assert effective_process_cov(d, np.array([[5.0]]))[0, 0] == pytest.approx(6.5)
    assert mean_matrix(d)[0, 0] == 2.0


def test_random_measurement_matrix_inflates_r():
    H1 = np.array([[1.0, 0.0]])
    H0 = np.zeros((1, 2))
    R = np.array([[4.0]])
    d = DiscreteMatrixDistribution(np.stack([H1, H0]), np.stack([R, R]), np.array([0.7, 0.3]))
    E = np.array([[10.0, 0.0], [0.0, 1.0]])
    # var of a Bernoulli(0.7) multiplier times E[x1^2] = 0.21 * 10
    assert effective_meas_cov(d, E)[0, 0] == pytest.approx(4.0 + 2.1)


def test_moment_recursion_monte_carlo():
    z, qerr = moment_law_check(np.random.default_rng(5), samples=50_000, steps=5)
    assert z <= 3.5
    assert qerr <= 0.05


def test_update_keeps_second_moment():
    b = Belief.from_prior(np.array([1.0, 2.0]), np.eye(2))
    h = DiscreteMatrixDistribution.singleton(np.array([[1.0, 0.0]]), np.array([[1.0]]))
    u = update(b, h, np.array([3.0]))
    np.testing.assert_array_equal(u.second_moment, b.second_moment)
    assert u.cov[0, 0] == pytest.approx(0.5)
    assert u.mean[0] == pytest.approx(2.0)


def test_prior_second_moment():
    b = Belief.from_prior(np.array([1.0, 2.0]), np.diag([3.0, 4.0]))
    np.testing.assert_allclose(b.second_moment, [[4.0, 2.0], [2.0, 8.0]])


@given(st.integers(0, 1000))
def test_covariances_stay_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    K = 3
    F = np.stack([np.eye(3) + 0.3 * rng.normal(size=(3, 3)) for _ in range(K)])
    Q = np.stack([random_spd(rng, 3, 0.1) for _ in range(K)])
    p = rng.dirichlet(np.ones(K))
    fd = DiscreteMatrixDistribution(F, Q, p)
    H = np.stack([rng.normal(size=(2, 3)) for _ in range(2)])
    hd = DiscreteMatrixDistribution(H, np.stack([np.eye(2)] * 2), np.array([0.4, 0.6]))
    b = Belief.from_prior(rng.normal(size=3), random_spd(rng, 3))
    for _ in range(5):
        b = update(predict(b, fd), hd, rng.normal(size=2))
        for M in (b.cov, b.second_moment):
            assert np.array_equal(M, M.T)
            assert np.linalg.eigvalsh(M).min() > -1e-8 * max(1.0, np.abs(M).max())


def test_innovation_inverse_pseudo_on_singular():
    S = np.array([[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(innovation_inverse(S), np.linalg.pinv(S), atol=1e-12)
    with pytest.raises(RuntimeError):
        innovation_inverse(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_kf_reference_matches_closed_form_scalar():
    x, P = kf_reference(np.array([0.0]), np.array([[1.0]]), np.eye(1), np.eye(1), np.eye(1),
                        np.eye(1), np.array([2.0]))
    assert P[0, 0] == pytest.approx(2 / 3)
    assert x[0] == pytest.approx(4 / 3)


@pytest.mark.parametrize("bad", [
    lambda: DiscreteMatrixDistribution(np.ones((2, 2, 2)), np.stack([np.eye(2)] * 2),
                                       np.array([0.5, 0.6])),
    lambda: DiscreteMatrixDistribution(np.ones((2, 2, 2)), np.stack([np.eye(2)] * 2),
                                       np.array([1.5, -0.5])),
    lambda: predict(Belief.from_prior(np.zeros(3), np.eye(3)),
                    DiscreteMatrixDistribution.singleton(np.eye(2), np.eye(2))),
])
def test_invalid_inputs(bad):
    with pytest.raises(InvalidArgument):
        bad()
