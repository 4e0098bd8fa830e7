import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from rmmht import InvalidArgument
from rmmht.dynamics import default_model_set, position_measurement
from rmmht.hypothesis import (Scan, ScoringParams, enumerate_hypotheses, gate, gate_threshold,
                              mahalanobis_sq, prediction_chain, score_hypothesis)
from rmmht.rcmkf import Belief

MODELS = default_model_set()
MEAS = position_measurement(400.0)
PARAMS = ScoringParams(P_d=0.9, lambda_f=50.0, lambda_v=1e-4, V=1e9)


def _track():
    return Belief.from_prior(np.array([0.0, 100.0, 0.0, 0.0]), np.diag([1e4, 100.0, 1e4, 100.0]))


def test_gate_threshold_for_1e4_exclusion():
    assert gate_threshold(1e-4) == pytest.approx(18.420680743952367)
    assert gate_threshold(1e-4, dof=3) == pytest.approx(21.107513290003887)


def test_mahalanobis_matches_inverse():
    S = np.array([[4.0, 1.0], [1.0, 3.0]])
    Z = np.array([[1.0, 2.0], [-3.0, 0.5]])
    ref = [d @ np.linalg.solve(S, d) for d in Z]
    np.testing.assert_allclose(mahalanobis_sq(Z, np.zeros(2), S), ref)


def test_single_detection_score_matches_density():
    t = _track()
    z = np.array([520.0, -80.0])
    scans = [Scan(3, np.array([z, [9000.0, 9000.0]]))]
    ll, cost = score_hypothesis(t, (1,), (1,), scans, MODELS, MEAS, PARAMS)
    F, Q = MODELS[1].F, MODELS[1].Q
    P = F @ t.cov @ F.T + Q
    S = MEAS.H @ P @ MEAS.H.T + MEAS.R
    dens = multivariate_normal(MEAS.H @ F @ t.mean, S).pdf(z)
    assert ll == pytest.approx(math.log(0.9 * dens / (50.0 / 1e9)), rel=1e-12)
    assert cost == -ll


def test_two_scan_score_uses_pure_prediction():
    t = _track()
    scans = [Scan(3, np.array([[500.0, 0.0]])), Scan(4, np.array([[1000.0, 0.0]]))]
    ll, _ = score_hypothesis(t, (0, 1), (0, 1), scans, MODELS, MEAS, PARAMS)
    (_, _), (zhat, S) = prediction_chain(t.mean, t.cov, (0, 1), MODELS, MEAS)
    dens = multivariate_normal(zhat, S).pdf([1000.0, 0.0])
    ref = math.log(0.1) + math.log(0.9 * dens * 1e9 / 50.0)
    assert ll == pytest.approx(ref, rel=1e-12)


def test_dummy_target_cost_zero_and_birth_term():
    t = _track()
    scans = [Scan(3, np.array([[500.0, 0.0]]))]
    assert score_hypothesis(t, (0,), (1,), scans, MODELS, MEAS, PARAMS, target=0)[0] == 0.0
    ll, _ = score_hypothesis(t, (0,), (1,), scans, MODELS, MEAS, PARAMS, initiates=True)
    assert ll == pytest.approx(math.log(1e-4 / 50.0))


def test_gate_excludes_far_measurements():
    scan = Scan(1, np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 3.0]]))
    assert gate(np.zeros(2), np.eye(2), scan, 16.0) == [0, 1, 3]


def test_enumeration_covers_gated_products_and_dummies():
    t = _track()
    scans = [Scan(3, np.array([[500.0, 0.0], [4e5, 4e5]])),
             Scan(4, np.array([[1000.0, 0.0]]))]
    hyps = enumerate_hypotheses([t], scans, MODELS, MEAS, PARAMS)
    track = [h for h in hyps if h.target == 1]
    # per model sequence: r1 in {0,1}, r2 in {0,1}; 4 model sequences
    assert len(track) == 16
    for h in track:
        ll, _ = score_hypothesis(t, h.models, h.meas, scans, MODELS, MEAS, PARAMS)
        assert h.likelihood_log == pytest.approx(ll, rel=1e-12, abs=1e-12)
    dummies = [h.meas for h in hyps if h.target == 0]
    assert sorted(dummies) == [(0, 1), (1, 0), (2, 0)]
    gated = enumerate_hypotheses([t], scans, MODELS, MEAS, PARAMS, dummy_for="gated")
    assert sorted(h.meas for h in gated if h.target == 0) == [(0, 1), (1, 0)]


def test_cap_keeps_all_dummy_hypothesis():
    t = _track()
    Z = np.array([[500.0 + 10 * i, 0.0] for i in range(8)])
    scans = [Scan(3, Z), Scan(4, Z + [500.0, 0.0])]
    hyps = enumerate_hypotheses([t], scans, MODELS, MEAS, PARAMS, cap=5)
    track = [h for h in hyps if h.target == 1]
    assert len(track) == 5
    assert any(h.meas == (0, 0) for h in track)
    assert hyps.pruned > 0


def test_bad_indices_rejected():
    scans = [Scan(3, np.array([[0.0, 0.0]]))]
    with pytest.raises(InvalidArgument):
        score_hypothesis(_track(), (0,), (2,), scans, MODELS, MEAS, PARAMS)
    with pytest.raises(InvalidArgument):
        score_hypothesis(_track(), (5,), (1,), scans, MODELS, MEAS, PARAMS)
    with pytest.raises(InvalidArgument):
        ScoringParams(P_d=1.5)
