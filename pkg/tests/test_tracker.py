import numpy as np
import pytest

from rmmht import InvalidArgument
from rmmht.association import Marginals, check_prop2, build_lp, solve_ip
from rmmht.dynamics import cv_model, default_model_set, position_measurement
from rmmht.hypothesis import Scan, ScoringParams
from rmmht.oracles import kf_reference
from rmmht.rcmkf import Belief
from rmmht.tracker import (RMMHTracker, StackedBelief, TrackerConfig, TrackStatus,
                           blockwise_inverse, build_stacked_system, fast_path_applicable,
                           rcmkf_stacked_step, step, two_point_init)

MEAS = position_measurement(400.0)
PARAMS = ScoringParams(P_d=0.9, lambda_f=5.0, lambda_v=1e-4, V=1e9)


def _belief(x, y, vx=-120.0, vy=0.0):
    return Belief.from_prior(np.array([x, vx, y, vy]), np.diag([160000.0, 400.0, 160000.0, 400.0]))


def _cfg(**kw):
    base = dict(models=[cv_model(4.0, 5.0)], meas_model=MEAS, params=PARAMS, window=1,
                birth=False)
    base.update(kw)
    return TrackerConfig(**base)


def test_single_target_single_measurement_is_a_kf_step():
    b = _belief(10_000.0, 5_000.0)
    trk = RMMHTracker(_cfg())
    trk.add_track(b)
    z = np.array([9_500.0, 5_100.0])
    trk.step([Scan(3, z[None])])
    m = trk.config.models[0]
    x, P = kf_reference(b.mean, b.cov, m.F, m.Q, MEAS.H, MEAS.R, z)
    got = trk.state.block(0)
    np.testing.assert_allclose(got.mean, x, rtol=0, atol=1e-10 * np.abs(x).max())
    np.testing.assert_allclose(got.cov, P, rtol=1e-10, atol=1e-10)


def test_separated_targets_reduce_to_independent_kfs():
    beliefs = [_belief(10_000.0, 5_000.0), _belief(-30_000.0, 40_000.0)]
    trk = RMMHTracker(_cfg())
    for b in beliefs:
        trk.add_track(b)
    Z = np.array([[-30_580.0, 40_050.0], [9_420.0, 4_900.0]])
    problem, sol, _ = trk.associate([Scan(3, Z)])
    assert check_prop2(problem, solve_ip(build_lp(problem)))
    trk.step([Scan(3, Z)])
    m = trk.config.models[0]
    for tau, (b, z) in enumerate(zip(beliefs, Z[::-1])):
        x, P = kf_reference(b.mean, b.cov, m.F, m.Q, MEAS.H, MEAS.R, z)
        np.testing.assert_allclose(trk.state.block(tau).mean, x, atol=1e-9 * np.abs(x).max())
        np.testing.assert_allclose(trk.state.block(tau).cov, P, rtol=1e-9)
    # cross-covariance stays zero because P starts block diagonal
    assert np.all(trk.state.P[:4, 4:] == 0.0)


def test_one_hot_association_gives_block_diagonal_innovation():
    st = StackedBelief.empty().append(_belief(0.0, 0.0)).append(_belief(0.0, 5_000.0))
    st = StackedBelief(st.X, st.P, np.diag(np.diag(st.Exx)))
    marg = Marginals(np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]), np.array([[1.0], [1.0]]))
    scan = Scan(1, np.array([[-600.0, 5_000.0], [-600.0, 0.0]]))
    tracks = [None, None]
    system = build_stacked_system(tracks, marg, [cv_model(4.0, 5.0)], MEAS, scan)
    ok, (exclusive, shared) = fast_path_applicable(marg)
    assert ok and exclusive == [1, 2] and shared == []
    _, info = rcmkf_stacked_step(st, system, exclusive)
    S = info["innovation"]
    assert info["blockwise"]
    assert np.all(S[:2, 2:] == 0.0) and np.all(S[2:, :2] == 0.0)
    np.testing.assert_allclose(blockwise_inverse(S, [[0, 1], [2, 3]]), np.linalg.inv(S),
                               rtol=1e-10, atol=0)


def test_shared_measurement_uses_mixture_row():
    st = StackedBelief.empty().append(_belief(0.0, 0.0)).append(_belief(0.0, 800.0))
    marg = Marginals(np.array([[0.3, 0.7], [0.7, 0.3]]), np.array([[1.0], [1.0]]))
    scan = Scan(1, np.array([[-600.0, 400.0]]))
    system = build_stacked_system([None, None], marg, [cv_model(4.0, 5.0)], MEAS, scan)
    np.testing.assert_allclose(system.row_probs, [[0.7, 0.3, 0.0]])
    ok, (_, shared) = fast_path_applicable(marg)
    assert not ok and shared == [1]
    new, info = rcmkf_stacked_step(st, system)
    assert not info["blockwise"]
    # mixed measurement pulls both targets
    pred = np.kron(np.eye(2), cv_model(4.0, 5.0).F) @ st.X
    assert new.X[2] != pred[2] and new.X[6] != pred[6]


def test_inconsistent_marginals_rejected():
    marg = Marginals(np.array([[0.0, 0.8], [0.0, 0.8]]), np.array([[1.0], [1.0]]))
    with pytest.raises(RuntimeError):
        build_stacked_system([None, None], marg, [cv_model(4.0, 5.0)], MEAS,
                             Scan(1, np.zeros((1, 2))))


def test_stacked_append_and_remove_roundtrip():
    a, b = _belief(1.0, 2.0), _belief(3.0, 4.0)
    st = StackedBelief.empty().append(a).append(b)
    assert st.num_targets == 2
    np.testing.assert_allclose(st.Exx[4:, :4], np.outer(b.mean, a.mean))
    back = st.remove([0])
    np.testing.assert_array_equal(back.X, b.mean)
    np.testing.assert_array_equal(back.Exx, b.second_moment)


def test_track_terminates_after_consecutive_misses():
    trk = RMMHTracker(_cfg(n_lost=3))
    trk.add_track(_belief(0.0, 0.0))
    empty = Scan(1, np.zeros((0, 2)))
    for k in range(3):
        trk.step([empty])
        assert len(trk.tracks) == 1 and trk.tracks[0].miss_count == k + 1
    trk.step([empty])
    assert trk.tracks == []
    assert trk.terminated[0].status is TrackStatus.TERMINATED


def test_births_from_unclaimed_pairs():
    params = ScoringParams(P_d=0.9, lambda_f=1.0, lambda_v=1.0, V=1e10)
    trk = RMMHTracker(_cfg(params=params, birth=True))
    trk.step([Scan(1, np.array([[0.0, 0.0]]))])
    trk.step([Scan(2, np.array([[-600.0, 0.0]]))])
    assert len(trk.tracks) == 1
    t = trk.tracks[0]
    assert t.status is TrackStatus.TENTATIVE
    np.testing.assert_allclose(t.belief.mean, [-600.0, -120.0, 0.0, 0.0])
    assert trk.estimates() == []
    assert len(trk.estimates(confirmed_only=False)) == 1


def test_two_point_init_covariance():
    b = two_point_init([0.0, 0.0], [500.0, -250.0], 5.0, 400.0)
    np.testing.assert_allclose(b.mean, [500.0, 100.0, -250.0, -50.0])
    np.testing.assert_allclose(np.diag(b.cov), [160000.0, 12800.0, 160000.0, 12800.0])


def test_failed_step_leaves_state_untouched():
    trk = RMMHTracker(_cfg())
    trk.add_track(_belief(0.0, 0.0))
    before = trk.state.X.copy()
    with pytest.raises(InvalidArgument):
        step(trk, [])
    np.testing.assert_array_equal(trk.state.X, before)


def test_deterministic_replay():
    rng = np.random.default_rng(0)
    scans = [Scan(k, rng.uniform(-3000, 3000, (6, 2))) for k in range(8)]

    def run():
        trk = RMMHTracker(TrackerConfig(models=default_model_set(), params=PARAMS, birth=False))
        trk.add_track(_belief(0.0, 0.0, vx=0.0))
        for k in range(len(scans) - 1):
            trk.step(scans[k:k + 2])
        return trk.state

    a, b = run(), run()
    assert np.array_equal(a.X, b.X) and np.array_equal(a.P, b.P)
