"""N-scan local hypothesis enumeration, gating and likelihood scoring.

A local hypothesis ``(target, models, meas)`` pairs a target with one model
index and one measurement index per scan of the window. Measurement index 0
is the dummy (missed detection); target 0 is the dummy target that absorbs
false alarms. Model indices are 0-based positions in the model set.

Likelihoods use the pure prediction chain from the track state at the start
of the window: no intermediate measurement updates are applied.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import InvalidArgument
from .dynamics import MeasurementModel, MotionModel

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Scan:
    time_index: int
    measurements: np.ndarray  # (R, 2); row i is measurement index i + 1

    def __post_init__(self):
        Z = np.asarray(self.measurements, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "measurements", Z)

    @property
    def count(self) -> int:
        return len(self.measurements)

    def get(self, r: int) -> np.ndarray:
        if not 1 <= r <= self.count:
            raise InvalidArgument(f"measurement index {r} outside 1..{self.count}")
        return self.measurements[r - 1]


@dataclass(frozen=True)
class LocalHypothesis:
    target: int
    models: tuple
    meas: tuple
    cost: float
    likelihood_log: float

    @property
    def first_meas(self) -> int:
        return self.meas[0]

    @property
    def first_model(self) -> int:
        return self.models[0]


@dataclass(frozen=True)
class ScoringParams:
    P_d: float = 0.9
    lambda_f: float = 50.0
    lambda_v: float = 1e-4
    V: float = 1e9
    gate_gamma: float = -2.0 * math.log(1e-4)

    def __post_init__(self):
        if not 0.0 < self.P_d < 1.0:
            raise InvalidArgument("P_d must lie in (0, 1)")
        if self.lambda_f <= 0 or self.V <= 0 or self.gate_gamma <= 0:
            raise InvalidArgument("lambda_f, V and gate_gamma must be positive")
        if self.lambda_v < 0:
            raise InvalidArgument("lambda_v must be non-negative")

    @property
    def log_miss(self) -> float:
        return math.log1p(-self.P_d)

    @property
    def log_clutter_density(self) -> float:
        # log(lambda_f * p_f) with p_f = 1/V
        return math.log(self.lambda_f) - math.log(self.V)

    @property
    def log_birth_ratio(self) -> float:
        return math.log(self.lambda_v) - math.log(self.lambda_f)


def gate_threshold(exclusion_prob: float = 1e-4, dof: int = 2) -> float:
    """Chi-square gate leaving a target-originated measurement out w.p. ``exclusion_prob``."""
    if dof == 2:
        return -2.0 * math.log(exclusion_prob)
    from scipy.stats import chi2

    return float(chi2.isf(exclusion_prob, dof))


def mahalanobis_sq(Z: np.ndarray, zhat: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distances of the rows of ``Z`` from ``zhat``."""
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise InvalidArgument("innovation covariance is not positive definite") from exc
    if Z.size == 0:
        return np.zeros(0)
    y = np.linalg.solve(L, (Z - zhat).T)
    return np.einsum("ij,ij->j", y, y)


def gate(predicted_z, S, scan: Scan, gamma: float) -> list[int]:
    """Measurement indices inside the gate, always starting with the dummy 0."""
    d2 = mahalanobis_sq(scan.measurements, np.asarray(predicted_z, float), np.asarray(S, float))
    return [0] + [int(i) + 1 for i in np.flatnonzero(d2 <= gamma)]


def log_gaussian(d2, S: np.ndarray):
    _, logdet = np.linalg.slogdet(S)
    return -0.5 * d2 - LOG_2PI - 0.5 * logdet


def prediction_chain(mean, cov, model_seq: Sequence[int], models: Sequence[MotionModel],
                     meas_model: MeasurementModel):
    """Pseudo measurements and covariances along a model sequence."""
    x = np.asarray(mean, dtype=float)
    P = np.asarray(cov, dtype=float)
    H, R = meas_model.H, meas_model.R
    out = []
    for s in model_seq:
        m = models[s]
        x = m.F @ x
        P = m.F @ P @ m.F.T + m.Q
        out.append((H @ x, H @ P @ H.T + R))
    return out


def detection_log_term(z, zhat, S, params: ScoringParams) -> float:
    d2 = float(mahalanobis_sq(np.atleast_2d(z), zhat, S)[0])
    return math.log(params.P_d) + float(log_gaussian(d2, S)) - params.log_clutter_density


def score_hypothesis(track_state, s, r, scans: Sequence[Scan], models, meas_model,
                     params: ScoringParams, target: int = 1, initiates: bool = False):
    """Log-likelihood and cost of one local hypothesis.

    ``track_state`` is anything with ``mean`` and ``cov``. With ``initiates``
    the first real measurement is scored as a track birth instead of a
    detection of an existing track.
    """
    s, r = tuple(s), tuple(r)
    if not (len(s) == len(r) == len(scans)):
        raise InvalidArgument("model, measurement and scan counts differ")
    if target == 0:
        return 0.0, -0.0
    for n, (sn, rn) in enumerate(zip(s, r)):
        if not 0 <= sn < len(models):
            raise InvalidArgument(f"model index {sn} out of range in scan {n}")
        if not 0 <= rn <= scans[n].count:
            raise InvalidArgument(f"measurement index {rn} out of range in scan {n}")
    chain = prediction_chain(track_state.mean, track_state.cov, s, models, meas_model)
    total = 0.0
    born = False
    for n, rn in enumerate(r):
        if rn == 0:
            total += params.log_miss
        elif initiates and not born:
            total += params.log_birth_ratio
            born = True
        else:
            zhat, S = chain[n]
            total += detection_log_term(scans[n].get(rn), zhat, S, params)
    return total, -total


class HypothesisList(list):
    """List of hypotheses carrying the number pruned by the per-track cap."""

    pruned: int = 0


def pure_prediction_advance(models: Sequence[MotionModel], meas_model: MeasurementModel):
    """Step function for the model-conditioned pure prediction chain."""
    H, R = meas_model.H, meas_model.R

    def advance(state, s):
        x, P = state
        m = models[s]
        x = m.F @ x
        P = m.F @ P @ m.F.T + m.Q
        return (x, P), H @ x, H @ P @ H.T + R

    return advance


def _track_hypotheses(tau, start_state, advance: Callable, n_models: int,
                      scans: Sequence[Scan], params: ScoringParams):
    """All gated (s, r, log L) tuples for one track."""
    N = len(scans)
    log_miss = params.log_miss
    log_pd = math.log(params.P_d)
    log_clutter = params.log_clutter_density
    out = []

    def recurse(n, state, s_prefix, partial):
        # partial: list of (r_prefix, log-likelihood so far)
        if n == N:
            for r_prefix, ll in partial:
                out.append((s_prefix, r_prefix, ll))
            return
        for s in range(n_models):
            new_state, zhat, S = advance(state, s)
            Z = scans[n].measurements
            d2 = mahalanobis_sq(Z, zhat, S)
            inside = np.flatnonzero(d2 <= params.gate_gamma)
            terms = [(0, log_miss)]
            if len(inside):
                logn = log_gaussian(d2[inside], S)
                for i, ln in zip(inside, logn):
                    terms.append((int(i) + 1, log_pd + float(ln) - log_clutter))
            extended = [(rp + (r,), ll + t) for rp, ll in partial for r, t in terms]
            recurse(n + 1, new_state, s_prefix + (s,), extended)

    recurse(0, start_state, (), [((), 0.0)])
    return out


def enumerate_hypotheses(tracks: Sequence, scans: Sequence[Scan], models, meas_model,
                         params: ScoringParams, cap: int = 200, *,
                         advance: Callable | None = None, n_models: int | None = None,
                         dummy_for: str = "all") -> HypothesisList:
    """Gated local hypotheses for every track plus dummy-target hypotheses.

    Tracks are indexed 1..T in input order. Each track keeps at most ``cap``
    lowest-cost hypotheses; the all-dummy hypothesis is always retained so
    the association problem stays feasible. Dummy-target hypotheses cover a
    single measurement each with cost 0; ``dummy_for="gated"`` restricts them
    to measurements that fall in at least one track gate.

    ``advance(state, s) -> (state, zhat, S)`` overrides the prediction chain;
    track states are then taken as given instead of ``(mean, cov)``.
    """
    N = len(scans)
    if N < 1:
        raise InvalidArgument("window must hold at least one scan")
    if cap <= 0:
        raise InvalidArgument("cap must be positive")
    if advance is None:
        advance = pure_prediction_advance(models, meas_model)
        n_models = len(models)
        starts = [(np.asarray(t.mean, float), np.asarray(t.cov, float)) for t in tracks]
    else:
        starts = list(tracks)
        n_models = n_models or 1

    result = HypothesisList()
    covered = set()
    all_dummy = (0,) * N
    for tau, start in enumerate(starts, start=1):
        raw = _track_hypotheses(tau, start, advance, n_models, scans, params)
        # lowest cost first; ties by generation order
        raw.sort(key=lambda h: -h[2])
        if len(raw) > cap:
            kept = raw[:cap]
            if not any(r == all_dummy for _, r, _ in kept):
                dummy = next(h for h in raw if h[1] == all_dummy)
                kept[-1] = dummy
            result.pruned += len(raw) - cap
            raw = kept
        for s, r, ll in raw:
            result.append(LocalHypothesis(tau, s, r, -ll, ll))
            for n, rn in enumerate(r):
                if rn:
                    covered.add((n, rn))
    if result.pruned:
        log.debug("pruned %d hypotheses at cap %d", result.pruned, cap)

    zeros = (0,) * N
    for n, scan in enumerate(scans):
        for rn in range(1, scan.count + 1):
            if dummy_for == "gated" and (n, rn) not in covered:
                continue
            r = tuple(rn if m == n else 0 for m in range(N))
            result.append(LocalHypothesis(0, zeros, r, 0.0, 0.0))
    return result
