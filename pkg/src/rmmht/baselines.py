"""Reference filters: Kalman filter, IMM, and an IMM-MHT tracker.

The IMM-MHT here scores N-scan hypotheses with the moment-matched IMM
prediction of each track (one effective model per track), solves the
association exactly as a 0-1 program and IMM-updates every track with its
first-scan measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import InvalidArgument
from .association import AssociationProblem, build_lp, marginals, solve_ip
from .hypothesis import Scan, enumerate_hypotheses
from .rcmkf import Belief, symmetrize
from .tracker import (BirthBuffer, Track, TrackerConfig, TrackStatus, update_miss_counts)

P1 = np.array([[0.95, 0.05], [0.1, 0.9]])
P2 = np.array([[0.95, 0.05], [0.2, 0.8]])
P3 = np.array([[0.95, 0.05], [0.3, 0.7]])
TRANSITIONS = {"p1": P1, "p2": P2, "p3": P3}


def kf_step(mean, cov, F, Q, H, R, z=None):
    """Textbook predict + update; ``z=None`` predicts only."""
    x = F @ mean
    P = F @ cov @ F.T + Q
    if z is None:
        return x, symmetrize(P)
    S = H @ P @ H.T + R
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular innovation covariance") from exc
    x = x + K @ (np.asarray(z, float) - H @ x)
    P = P - K @ S @ K.T
    return x, symmetrize(P)


def transition_matrix(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidArgument("transition matrix must be square")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidArgument("transition matrix must be row-stochastic")
    return P


def stationary_distribution(P) -> np.ndarray:
    w, V = np.linalg.eig(np.asarray(P, float).T)
    v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
    return v / v.sum()


@dataclass
class ImmBelief:
    means: np.ndarray  # (S, n)
    covs: np.ndarray  # (S, n, n)
    mu: np.ndarray  # (S,)

    @classmethod
    def from_belief(cls, mean, cov, mu):
        mu = np.asarray(mu, float)
        S = len(mu)
        return cls(np.tile(np.asarray(mean, float), (S, 1)),
                   np.tile(np.asarray(cov, float), (S, 1, 1)), mu)

    def combined(self):
        x = self.mu @ self.means
        d = self.means - x
        P = np.einsum("s,sij->ij", self.mu, self.covs) + np.einsum("s,si,sj->ij", self.mu, d, d)
        return x, symmetrize(P)


def _mix(b: ImmBelief, Pij):
    c = Pij.T @ b.mu
    with np.errstate(invalid="ignore", divide="ignore"):
        w = (Pij * b.mu[:, None]) / c[None, :]  # w[i, j] = mu_{i|j}
    w = np.nan_to_num(w)
    x0 = w.T @ b.means
    P0 = np.empty_like(b.covs)
    for j in range(len(c)):
        d = b.means - x0[j]
        P0[j] = np.einsum("i,ikl->kl", w[:, j], b.covs) + np.einsum("i,ik,il->kl", w[:, j], d, d)
    return c, x0, P0


def imm_predict(b: ImmBelief, Pij, models) -> tuple:
    """Interaction and mode-matched prediction; returns (predicted belief, c)."""
    c, x0, P0 = _mix(b, Pij)
    means = np.stack([m.F @ x0[j] for j, m in enumerate(models)])
    covs = np.stack([symmetrize(m.F @ P0[j] @ m.F.T + m.Q) for j, m in enumerate(models)])
    return ImmBelief(means, covs, c), c


def imm_step(b: ImmBelief, Pij, models, meas_model, z=None) -> ImmBelief:
    """One IMM cycle. Without a measurement the mode probabilities stay as they were."""
    Pij = transition_matrix(Pij)
    pred, c = imm_predict(b, Pij, models)
    if z is None:
        return ImmBelief(pred.means, pred.covs, b.mu.copy())
    H, R = meas_model.H, meas_model.R
    z = np.asarray(z, float)
    means = np.empty_like(pred.means)
    covs = np.empty_like(pred.covs)
    loglik = np.empty(len(c))
    for j in range(len(c)):
        x, P = pred.means[j], pred.covs[j]
        S = H @ P @ H.T + R
        nu = z - H @ x
        K = np.linalg.solve(S, H @ P).T
        means[j] = x + K @ nu
        covs[j] = symmetrize(P - K @ S @ K.T)
        _, logdet = np.linalg.slogdet(S)
        loglik[j] = -0.5 * nu @ np.linalg.solve(S, nu) - 0.5 * logdet - math.log(2 * math.pi)
    with np.errstate(divide="ignore"):
        logw = loglik + np.log(c)
    mu = np.exp(logw - logsumexp(logw))
    return ImmBelief(means, covs, mu)


def imm_advance(Pij, models, meas_model):
    """Step function for hypothesis enumeration: one IMM prediction per scan."""
    H, R = meas_model.H, meas_model.R

    def advance(state, _s):
        pred, _ = imm_predict(state, Pij, models)
        x, P = pred.combined()
        return pred, H @ x, H @ P @ H.T + R

    return advance


@dataclass
class ImmTrack(Track):
    imm: ImmBelief = None


class ImmMhtTracker:
    """N-scan IMM-MHT with exact 0-1 association (one instance per replica)."""

    def __init__(self, transition, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.Pij = transition_matrix(transition)
        if self.Pij.shape[0] != len(self.config.models):
            raise InvalidArgument("transition matrix size differs from the model count")
        self.tracks: list[ImmTrack] = []
        self._next_id = 1
        self._births = BirthBuffer()
        self.mu0 = stationary_distribution(self.Pij)

    def add_track(self, belief: Belief, status=TrackStatus.CONFIRMED) -> ImmTrack:
        imm = ImmBelief.from_belief(belief.mean, belief.cov, self.mu0)
        t = ImmTrack(self._next_id, belief, status=status, imm=imm)
        self._next_id += 1
        self.tracks.append(t)
        return t

    def step(self, window_scans):
        cfg = self.config
        scan = window_scans[0]
        diag = {"time": scan.time_index, "objective": 0.0, "integral": True,
                "hypotheses": 0, "shared": 0, "pruned": 0}
        T = len(self.tracks)
        claimed = np.zeros(scan.count)
        if T:
            advance = imm_advance(self.Pij, cfg.models, cfg.meas_model)
            hyps = enumerate_hypotheses([t.imm for t in self.tracks], window_scans, None, None,
                                        cfg.params, cfg.cap, advance=advance, n_models=1,
                                        dummy_for="gated")
            keys = sorted({(n, r) for h in hyps for n, r in enumerate(h.meas) if r})
            problem = AssociationProblem(list(hyps), T, tuple(s.count for s in window_scans),
                                         1, keys)
            sol = solve_ip(build_lp(problem))
            marg = marginals(problem, sol)
            for tau, t in enumerate(self.tracks):
                r = int(np.argmax(marg.assoc[tau]))
                z = scan.get(r) if r else None
                t.imm = imm_step(t.imm, self.Pij, cfg.models, cfg.meas_model, z)
                x, P = t.imm.combined()
                t.belief = Belief(x, P, np.outer(x, x) + P)
            claimed = marg.assoc[:, 1:].sum(axis=0)
            diag.update(objective=sol.objective, integral=sol.is_integral,
                        hypotheses=len(hyps), pruned=hyps.pruned)
        else:
            marg = None
        if T:
            ended = set(update_miss_counts(self.tracks, marg, cfg))
            self.tracks = [t for i, t in enumerate(self.tracks) if i not in ended]
        if cfg.birth:
            for b in self._births.update(scan, claimed, cfg):
                self.add_track(b, status=TrackStatus.TENTATIVE)
        diag["tracks"] = len(self.tracks)
        return diag

    def estimates(self, confirmed_only: bool = True):
        return [(t.id, t.imm.combined()[0]) for t in self.tracks
                if not confirmed_only or t.status is TrackStatus.CONFIRMED]


class KnownAssociationFilter:
    """Per-target IMM or KF fed with the true-origin measurement of each target."""

    def __init__(self, kind: str, config: TrackerConfig | None = None, transition=None):
        self.config = config or TrackerConfig()
        self.kind = kind
        if kind == "imm":
            self.Pij = transition_matrix(transition)
            self.mu0 = stationary_distribution(self.Pij)
        elif kind != "kf":
            raise InvalidArgument(f"unknown filter kind {kind!r}")
        self.states = []

    def add_track(self, belief: Belief):
        if self.kind == "imm":
            self.states.append(ImmBelief.from_belief(belief.mean, belief.cov, self.mu0))
        else:
            self.states.append((belief.mean.copy(), belief.cov.copy()))

    def step(self, scan: Scan, origin):
        cfg = self.config
        H, R = cfg.meas_model.H, cfg.meas_model.R
        model = cfg.models[-1]
        for i in range(len(self.states)):
            hit = np.flatnonzero(np.asarray(origin) == i + 1)
            z = scan.measurements[hit[0]] if len(hit) else None
            if self.kind == "imm":
                self.states[i] = imm_step(self.states[i], self.Pij, cfg.models,
                                          cfg.meas_model, z)
            else:
                self.states[i] = kf_step(*self.states[i], model.F, model.Q, H, R, z)
        return {"time": scan.time_index}

    def estimates(self, confirmed_only: bool = True):
        if self.kind == "imm":
            return [(i + 1, s.combined()[0]) for i, s in enumerate(self.states)]
        return [(i + 1, s[0].copy()) for i, s in enumerate(self.states)]
