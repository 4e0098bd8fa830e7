"""RMM-MHT tracker: enumerate, relax, marginalize, stacked RCMKF update.

All live targets share one stacked belief (X, P, E[XX']). Each step looks at
an N-scan window, solves the relaxed association problem, commits only the
first-scan association and model probabilities, and filters the stacked
state with the random-coefficient Kalman filter built from them. Cross
covariances created by shared measurements are kept until a track ends.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import InvalidArgument
from .association import (AssociationProblem, Marginals, build_lp, marginals, solve_ip,
                          solve_lp, track_init_lp)
from .dynamics import MeasurementModel, default_model_set, position_measurement
from .hypothesis import Scan, ScoringParams, enumerate_hypotheses
from .rcmkf import (Belief, DiscreteMatrixDistribution, effective_process_cov,
                    innovation_inverse, symmetrize)

log = logging.getLogger(__name__)

DIM = 4
MEAS = 2


class TrackStatus(Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    TERMINATED = "terminated"


@dataclass
class Track:
    id: int
    belief: Belief
    miss_count: int = 0
    status: TrackStatus = TrackStatus.CONFIRMED
    hits: int = 0


@dataclass
class TrackerConfig:
    dt: float = 5.0
    window: int = 2
    models: list = field(default_factory=default_model_set)
    meas_model: MeasurementModel = field(default_factory=lambda: position_measurement(400.0))
    params: ScoringParams = field(default_factory=ScoringParams)
    cap: int = 200
    solver: str = "lp"  # "lp" or "ip"
    miss_threshold: float = 0.5
    n_lost: int = 3
    confirm_hits: int = 2
    birth: bool = True
    birth_threshold: float = 0.8
    birth_v_max: float = 300.0
    birth_cost: str = "log"
    dump_lp: object = None  # callable(str) receiving each LP tableau


@dataclass
class StackedBelief:
    X: np.ndarray
    P: np.ndarray
    Exx: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0)))

    @property
    def num_targets(self) -> int:
        return len(self.X) // DIM

    def block(self, tau: int) -> Belief:
        """Per-target view, ``tau`` 0-based."""
        sl = slice(DIM * tau, DIM * tau + DIM)
        return Belief(self.X[sl].copy(), self.P[sl, sl].copy(), self.Exx[sl, sl].copy())

    def append(self, b: Belief) -> "StackedBelief":
        n = len(self.X)
        X = np.concatenate([self.X, b.mean])
        P = np.zeros((n + DIM, n + DIM))
        P[:n, :n] = self.P
        P[n:, n:] = b.cov
        E = np.zeros_like(P)
        E[:n, :n] = self.Exx
        E[n:, n:] = b.second_moment
        E[n:, :n] = np.outer(b.mean, self.X)
        E[:n, n:] = E[n:, :n].T
        return StackedBelief(X, P, E)

    def remove(self, taus) -> "StackedBelief":
        drop = set(taus)
        keep = [i for i in range(len(self.X)) if i // DIM not in drop]
        return StackedBelief(self.X[keep], self.P[np.ix_(keep, keep)],
                             self.Exx[np.ix_(keep, keep)])


@dataclass
class StackedSystem:
    """Randomized stacked state and measurement equations for one step.

    ``f_dists[tau]`` is the model mixture of target ``tau``. Measurement row
    ``i`` (original first-scan index ``meas_index[i]``) is H placed at slot
    ``tau`` with probability ``row_probs[i, tau]`` and the zero row with the
    residual ``row_probs[i, -1]``.
    """

    f_dists: list
    meas_index: list
    row_probs: np.ndarray  # (rows, T + 1)
    H: np.ndarray
    R: np.ndarray
    z: np.ndarray  # (rows * 2,)

    @property
    def num_targets(self) -> int:
        return len(self.f_dists)

    def mean_transition(self) -> np.ndarray:
        T = self.num_targets
        F = np.zeros((DIM * T, DIM * T))
        for tau, d in enumerate(self.f_dists):
            F[DIM * tau:DIM * tau + DIM, DIM * tau:DIM * tau + DIM] = np.einsum(
                "k,kij->ij", d.probs, d.matrices)
        return F

    def effective_process_cov(self, Exx: np.ndarray) -> np.ndarray:
        """Block-diagonal: realizations of different targets are independent."""
        T = self.num_targets
        Q = np.zeros((DIM * T, DIM * T))
        for tau, d in enumerate(self.f_dists):
            sl = slice(DIM * tau, DIM * tau + DIM)
            Q[sl, sl] = effective_process_cov(d, Exx[sl, sl])
        return Q

    def row_realizations(self, i: int):
        """(probabilities, matrices) of measurement row ``i`` incl. the zero row."""
        T = self.num_targets
        mats = np.zeros((T + 1, MEAS, DIM * T))
        for tau in range(T):
            mats[tau, :, DIM * tau:DIM * tau + DIM] = self.H
        return self.row_probs[i], mats

    def mean_measurement(self) -> np.ndarray:
        T = self.num_targets
        rows = len(self.meas_index)
        h = np.zeros((MEAS * rows, DIM * T))
        for i in range(rows):
            for tau in range(T):
                h[MEAS * i:MEAS * i + MEAS, DIM * tau:DIM * tau + DIM] = (
                    self.row_probs[i, tau] * self.H)
        return h

    def effective_meas_cov(self, Exx: np.ndarray) -> np.ndarray:
        rows = len(self.meas_index)
        Rt = np.zeros((MEAS * rows, MEAS * rows))
        hbar = self.mean_measurement()
        for i in range(rows):
            probs, mats = self.row_realizations(i)
            D = mats - hbar[MEAS * i:MEAS * i + MEAS]
            infl = np.einsum("k,kij,jl,kml->im", probs, D, Exx, D)
            Rt[MEAS * i:MEAS * i + MEAS, MEAS * i:MEAS * i + MEAS] = symmetrize(self.R + infl)
        return Rt


def build_stacked_system(tracks, marg: Marginals, models, meas_model: MeasurementModel,
                         scan: Scan) -> StackedSystem:
    """Stacked randomized system from first-scan marginals.

    Measurements that no target claims with positive probability have a
    zero mean row and drop out of the update, so they are omitted.
    """
    T = len(tracks)
    mats = np.stack([m.F for m in models])
    covs = np.stack([m.Q for m in models])
    f_dists = []
    for tau in range(T):
        p = np.clip(marg.model[tau], 0.0, None)
        f_dists.append(DiscreteMatrixDistribution(mats, covs, p / p.sum()))
    meas_index, rows = [], []
    for r in range(1, scan.count + 1):
        p = np.clip(marg.assoc[:, r], 0.0, None) if T else np.zeros(0)
        total = p.sum()
        if total <= 1e-12:
            continue
        residual = 1.0 - total
        if residual < -1e-8:
            raise RuntimeError(f"inconsistent marginals: measurement {r} has mass {total}")
        meas_index.append(r)
        rows.append(np.append(p, max(residual, 0.0)))
    row_probs = np.array(rows).reshape(len(rows), T + 1)
    z = (np.concatenate([scan.get(r) for r in meas_index]) if meas_index else np.zeros(0))
    return StackedSystem(f_dists, meas_index, row_probs, meas_model.H, meas_model.R, z)


def fast_path_applicable(marg: Marginals, tol: float = 1e-9):
    """Split first-scan measurements into exclusive (one-hot to one target) and shared.

    Returns ``(all_exclusive, (exclusive, shared))`` with 1-based measurement
    indices; measurements claimed by no target are in neither set.
    """
    exclusive, shared = [], []
    for r in range(1, marg.assoc.shape[1]):
        col = marg.assoc[:, r]
        nz = np.flatnonzero(col > tol)
        if len(nz) == 0:
            continue
        if len(nz) == 1 and abs(col[nz[0]] - 1.0) <= tol:
            exclusive.append(r)
        else:
            shared.append(r)
    return len(shared) == 0, (exclusive, shared)


def blockwise_inverse(S: np.ndarray, blocks) -> np.ndarray:
    """Invert ``S`` block by block; ``blocks`` lists index arrays covering S.

    Off-block entries must be exactly zero.
    """
    out = np.zeros_like(S)
    mask = np.zeros(S.shape, bool)
    for idx in blocks:
        idx = np.asarray(idx)
        mask[np.ix_(idx, idx)] = True
        out[np.ix_(idx, idx)] = innovation_inverse(S[np.ix_(idx, idx)])
    if np.any(S[~mask] != 0.0):
        raise InvalidArgument("matrix is not block diagonal for the given partition")
    return out


def _innovation_blocks(S: np.ndarray, system: StackedSystem, exclusive):
    """Partition from the fast path if the exclusive blocks are decoupled in S."""
    if not exclusive:
        return None
    pos = {r: i for i, r in enumerate(system.meas_index)}
    blocks = []
    rest = set(range(S.shape[0]))
    for r in exclusive:
        i = pos[r]
        idx = [MEAS * i, MEAS * i + 1]
        blocks.append(idx)
        rest -= set(idx)
    if rest:
        blocks.append(sorted(rest))
    mask = np.zeros(S.shape, bool)
    for idx in blocks:
        mask[np.ix_(idx, idx)] = True
    if np.any(S[~mask] != 0.0):
        return None
    return blocks


def rcmkf_stacked_step(belief: StackedBelief, system: StackedSystem, exclusive=()):
    """Predict with the model mixtures and update with the stacked measurement."""
    F = system.mean_transition()
    Qt = system.effective_process_cov(belief.Exx)
    X = F @ belief.X
    P = symmetrize(F @ belief.P @ F.T + Qt)
    E = symmetrize(F @ belief.Exx @ F.T + Qt)
    info = {"innovation": None, "blockwise": False}
    if len(system.meas_index):
        h = system.mean_measurement()
        Rt = system.effective_meas_cov(E)
        S = symmetrize(h @ P @ h.T + Rt)
        blocks = _innovation_blocks(S, system, list(exclusive))
        if blocks is not None:
            Sinv = blockwise_inverse(S, blocks)
            info["blockwise"] = True
        else:
            Sinv = innovation_inverse(S)
        K = P @ h.T @ Sinv
        X = X + K @ (system.z - h @ X)
        P = symmetrize((np.eye(len(X)) - K @ h) @ P)
        info["innovation"] = S
    return StackedBelief(X, P, E), info


def two_point_init(z1, z2, dt: float, sigma: float) -> Belief:
    z1 = np.asarray(z1, float)
    z2 = np.asarray(z2, float)
    v = (z2 - z1) / dt
    mean = np.array([z2[0], v[0], z2[1], v[1]])
    cov = np.diag([sigma**2, 2 * sigma**2 / dt**2, sigma**2, 2 * sigma**2 / dt**2])
    return Belief.from_prior(mean, cov)


class BirthBuffer:
    """Unclaimed measurements of the last two committed scans, fed to the birth LP."""

    def __init__(self):
        self._scans = deque(maxlen=2)

    def snapshot(self):
        return list(self._scans)

    def restore(self, scans):
        self._scans = deque(scans, maxlen=2)

    def update(self, scan: Scan, claimed, cfg) -> list:
        """Record ``scan``'s unclaimed measurements; return beliefs of accepted births."""
        free = [r for r in range(1, scan.count + 1) if claimed[r - 1] <= 1e-9]
        self._scans.append(Scan(scan.time_index, scan.measurements[[r - 1 for r in free]]))
        if len(self._scans) < 2:
            return []
        prev, cur = self._scans
        if prev.count == 0 or cur.count == 0:
            return []
        sigma = math.sqrt(float(cfg.meas_model.R[0, 0]))
        born = track_init_lp([prev, cur], cfg.models, cfg.meas_model, cfg.params,
                             v_max=cfg.birth_v_max, cost_mode=cfg.birth_cost)
        out, used_prev, used_cur = [], set(), set()
        for (r1, r2), p in born:
            if p >= cfg.birth_threshold and r1 not in used_prev and r2 not in used_cur:
                out.append(two_point_init(prev.get(r1), cur.get(r2), cfg.dt, sigma))
                used_prev.add(r1)
                used_cur.add(r2)
        if out:
            keep_p = [i for i in range(prev.count) if i + 1 not in used_prev]
            keep_c = [i for i in range(cur.count) if i + 1 not in used_cur]
            self._scans.clear()
            self._scans.append(Scan(prev.time_index, prev.measurements[keep_p]))
            self._scans.append(Scan(cur.time_index, cur.measurements[keep_c]))
        return out


def update_miss_counts(tracks, marg: Marginals, cfg) -> list:
    """Advance miss/hit counters; return 0-based indices of tracks to terminate."""
    ended = []
    for tau, t in enumerate(tracks):
        if marg.assoc[tau, 0] > cfg.miss_threshold:
            t.miss_count += 1
        else:
            t.miss_count = 0
            t.hits += 1
            if t.status is TrackStatus.TENTATIVE and t.hits >= cfg.confirm_hits:
                t.status = TrackStatus.CONFIRMED
        if t.miss_count > cfg.n_lost:
            t.status = TrackStatus.TERMINATED
            ended.append(tau)
    return ended


class RMMHTracker:
    """Stateful RMM-MHT over a stream of scans (one instance per replica)."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.state = StackedBelief.empty()
        self.tracks: list[Track] = []
        self._next_id = 1
        self._births = BirthBuffer()
        self.terminated: list[Track] = []

    @property
    def sigma(self) -> float:
        return math.sqrt(float(self.config.meas_model.R[0, 0]))

    def add_track(self, belief: Belief, status=TrackStatus.CONFIRMED) -> Track:
        self.state = self.state.append(belief)
        t = Track(self._next_id, belief, status=status)
        self._next_id += 1
        self.tracks.append(t)
        return t

    def _sync_beliefs(self):
        for tau, t in enumerate(self.tracks):
            t.belief = self.state.block(tau)

    def associate(self, window_scans):
        cfg = self.config
        beliefs = [self.state.block(tau) for tau in range(len(self.tracks))]
        hyps = enumerate_hypotheses(beliefs, window_scans, cfg.models, cfg.meas_model,
                                    cfg.params, cfg.cap, dummy_for="gated")
        keys = sorted({(n, r) for h in hyps for n, r in enumerate(h.meas) if r})
        problem = AssociationProblem(list(hyps), len(beliefs),
                                     tuple(s.count for s in window_scans),
                                     len(cfg.models), keys)
        lp = build_lp(problem)
        if cfg.dump_lp is not None:
            cfg.dump_lp(lp.dump())
        sol = solve_ip(lp) if cfg.solver == "ip" else solve_lp(lp)
        return problem, sol, hyps

    def step(self, window_scans):
        """Process one window; commits the first scan. Returns diagnostics."""
        if not window_scans:
            raise InvalidArgument("window must contain at least one scan")
        cfg = self.config
        scan = window_scans[0]
        diag = {"time": scan.time_index, "objective": 0.0, "integral": True,
                "hypotheses": 0, "shared": 0, "pruned": 0, "blockwise": False}
        T = len(self.tracks)
        if T:
            problem, sol, hyps = self.associate(window_scans)
            marg = marginals(problem, sol)
            system = build_stacked_system(self.tracks, marg, cfg.models, cfg.meas_model, scan)
            _, (exclusive, shared) = fast_path_applicable(marg)
            new_state, info = rcmkf_stacked_step(self.state, system, exclusive)
            self.state = new_state
            diag.update(objective=sol.objective, integral=sol.is_integral,
                        hypotheses=len(hyps), shared=len(shared), pruned=hyps.pruned,
                        blockwise=info["blockwise"])
            claimed = marg.assoc[:, 1:].sum(axis=0)
        else:
            marg = Marginals(np.zeros((0, scan.count + 1)), np.zeros((0, len(cfg.models))))
            claimed = np.zeros(scan.count)
        self._sync_beliefs()
        self.manage_tracks(marg, scan, claimed)
        diag["tracks"] = len(self.tracks)
        return diag

    def manage_tracks(self, marg: Marginals, scan: Scan, claimed):
        cfg = self.config
        ended = update_miss_counts(self.tracks, marg, cfg)
        if ended:
            self.state = self.state.remove(ended)
            self.terminated += [self.tracks[i] for i in ended]
            self.tracks = [t for i, t in enumerate(self.tracks) if i not in set(ended)]
        if cfg.birth:
            for b in self._births.update(scan, claimed, cfg):
                self.add_track(b, status=TrackStatus.TENTATIVE)

    def estimates(self, confirmed_only: bool = True):
        """``[(track_id, state)]`` for live tracks."""
        return [(t.id, self.state.X[DIM * i:DIM * i + DIM].copy())
                for i, t in enumerate(self.tracks)
                if not confirmed_only or t.status is TrackStatus.CONFIRMED]


def step(tracker: RMMHTracker, window_scans):
    """Functional form: run one step on a copy-free tracker; returns (tracks, diagnostics).

    A failure inside the step leaves the tracker state unchanged.
    """
    saved = (tracker.state, [Track(t.id, t.belief, t.miss_count, t.status, t.hits)
                             for t in tracker.tracks], tracker._births.snapshot(),
             tracker._next_id)
    try:
        diag = tracker.step(window_scans)
    except Exception:
        tracker.state, tracker.tracks, births, tracker._next_id = saved
        tracker._births.restore(births)
        raise
    return tracker.tracks, diag


def run(tracker, scans, start: int = 0):
    """Drive a tracker over ``scans[start:]`` with its N-scan window.

    Yields ``(time_index, estimates, diagnostics)`` after each committed scan.
    """
    N = tracker.config.window
    for k in range(start, len(scans)):
        window = scans[k:k + N]
        _, diag = step(tracker, window)
        yield scans[k].time_index, tracker.estimates(), diag
