"""OSPA metric and the seeded Monte Carlo comparison harness."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import InvalidArgument
from .baselines import TRANSITIONS, ImmMhtTracker, KnownAssociationFilter
from .dynamics import default_model_set, position_measurement
from .hypothesis import ScoringParams, gate_threshold
from .simulation import (ScenarioConfig, generate_scans_labeled, generate_truth,
                         region_volume, surveillance_region)
from .tracker import RMMHTracker, TrackerConfig, two_point_init

log = logging.getLogger(__name__)

WORKERS_ENV = "RMMHT_MAX_WORKERS"


@dataclass(frozen=True)
class OspaParams:
    p: float = 2.0
    c: float = 1000.0

    def __post_init__(self):
        if self.p < 1 or self.c <= 0:
            raise InvalidArgument("OSPA needs p >= 1 and c > 0")


def assignment_min_cost(cost):
    """Minimum-cost perfect matching of a square matrix: (permutation, total)."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise InvalidArgument("cost matrix must be square")
    if not np.all(np.isfinite(cost)):
        raise InvalidArgument("cost matrix must be finite")
    if cost.size == 0:
        return np.zeros(0, dtype=int), 0.0
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm, float(cost[rows, cols].sum())


def ospa(X, Y, params: OspaParams = OspaParams()) -> float:
    X = np.asarray(X, dtype=float).reshape(-1, 2) if len(X) else np.zeros((0, 2))
    Y = np.asarray(Y, dtype=float).reshape(-1, 2) if len(Y) else np.zeros((0, 2))
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return params.c
    if m > n:
        X, Y, m, n = Y, X, n, m
    p, c = params.p, params.c
    D = np.minimum(np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2), c) ** p
    cost = np.full((n, n), c**p)
    cost[:m] = D
    _, total = assignment_min_cost(cost)
    return float(min(c, (total / n) ** (1.0 / p)))


# --- algorithms -----------------------------------------------------------

ALGORITHM_BASES = ("rmm-mht", "imm-mht", "imm", "kf-oracle")


def parse_algorithm(name: str, default_transition: str = "p1"):
    """``"imm-mht-p2"`` -> ``("imm-mht", "p2")``; suffix optional."""
    name = name.lower()
    for suffix in TRANSITIONS:
        if name.endswith("-" + suffix):
            base = name[: -len(suffix) - 1]
            break
    else:
        base, suffix = name, default_transition
    if base not in ALGORITHM_BASES:
        raise InvalidArgument(f"unknown algorithm {name!r}; expected one of {ALGORITHM_BASES}")
    return base, suffix


def make_algorithm(name: str, config: TrackerConfig, transition=None):
    """Instantiate a tracker. RMM-MHT ignores ``transition`` entirely."""
    base, suffix = parse_algorithm(name)
    Pij = TRANSITIONS[suffix] if transition is None else np.asarray(transition, float)
    if base == "rmm-mht":
        return RMMHTracker(config)
    if base == "imm-mht":
        return ImmMhtTracker(Pij, config)
    if base == "imm":
        return KnownAssociationFilter("imm", config, Pij)
    return KnownAssociationFilter("kf", config)


def tracker_config_for(cfg: ScenarioConfig, V: float, window: int = 2, **overrides) -> TrackerConfig:
    params = ScoringParams(P_d=min(cfg.P_d, 1 - 1e-9), lambda_f=max(cfg.lambda_f, 1e-6),
                           lambda_v=overrides.pop("lambda_v", 1e-4), V=V,
                           gate_gamma=overrides.pop("gate_gamma", gate_threshold(1e-4)))
    return TrackerConfig(dt=cfg.dt, window=window, models=default_model_set(cfg.dt),
                         meas_model=position_measurement(cfg.sigma_z), params=params,
                         **overrides)


def initial_beliefs(truth, cfg: ScenarioConfig, seed: int):
    """Two-point initialization from two noisy looks at each target (times 1, 2)."""
    rng = np.random.default_rng([seed, 7])
    z1 = truth.positions(0) + cfg.sigma_z * rng.standard_normal(truth.positions(0).shape)
    z2 = truth.positions(1) + cfg.sigma_z * rng.standard_normal(truth.positions(1).shape)
    return [two_point_init(a, b, cfg.dt, cfg.sigma_z) for a, b in zip(z1, z2)]


def run_algorithm(name, scans, origins, truth, cfg: ScenarioConfig, tcfg: TrackerConfig,
                  inits, params: OspaParams, transition=None, first: int = 2):
    """Track ``scans[first:]`` and score each committed step.

    Returns rows ``(time, ospa, n_truth, n_tracks)`` and per-step diagnostics.
    """
    algo = make_algorithm(name, tcfg, transition)
    for b in inits:
        algo.add_track(b)
    rows, diags = [], []
    N = tcfg.window
    for k in range(first, len(scans)):
        if isinstance(algo, KnownAssociationFilter):
            diag = algo.step(scans[k], origins[k])
        else:
            diag = algo.step(scans[k:k + N])
        est = algo.estimates()
        pts = np.array([x[[0, 2]] for _, x in est]).reshape(-1, 2)
        gt = truth.positions(k)
        rows.append((scans[k].time_index, ospa(pts, gt, params), len(gt), len(pts)))
        diags.append(diag)
    return rows, diags, algo


def run_replica(cfg: ScenarioConfig, algorithms, run: int, params: OspaParams,
                window: int = 2, transition=None, tracker_overrides=None):
    """One Monte Carlo replica; every algorithm sees the same scans."""
    seed = cfg.seed + run
    truth = generate_truth(cfg, np.random.default_rng([seed, 3]))
    rng = np.random.default_rng(seed)
    scans, origins = generate_scans_labeled(truth, cfg, rng)
    V = region_volume(surveillance_region(truth, cfg))
    tcfg = tracker_config_for(cfg, V, window, **dict(tracker_overrides or {}))
    inits = initial_beliefs(truth, cfg, seed)
    out, failures = [], []
    for name in algorithms:
        try:
            rows, _, _ = run_algorithm(name, scans, origins, truth, cfg, tcfg, inits, params,
                                       transition)
        except Exception as exc:  # recorded and excluded from the average
            log.warning("replica %d, %s failed: %s", run, name, exc)
            failures.append((name, run, repr(exc)))
            continue
        out += [(name, run) + r for r in rows]
    return out, failures


@dataclass
class MonteCarloResult:
    rows: list  # (algorithm, run, step, ospa, n_truth, n_tracks)
    failures: list
    algorithms: list
    metadata: dict = field(default_factory=dict)

    def mean_curves(self) -> dict:
        """algorithm -> (steps, mean OSPA per step)."""
        out = {}
        for a in self.algorithms:
            by_step = {}
            for r in self.rows:
                if r[0] == a:
                    by_step.setdefault(r[2], []).append(r[3])
            steps = sorted(by_step)
            out[a] = (np.array(steps), np.array([np.mean(by_step[s]) for s in steps]))
        return out

    def summary(self) -> dict:
        """algorithm -> time-mean of the mean OSPA curve."""
        return {a: float(np.mean(v)) if len(v) else math.nan
                for a, (_, v) in self.mean_curves().items()}

    def write_csv(self, fh):
        _header(fh, self.metadata)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "run", "step", "ospa", "n_truth", "n_tracks"])
        for r in self.rows:
            w.writerow([r[0], r[1], r[2], repr(float(r[3])), r[4], r[5]])

    def write_summary(self, fh):
        _header(fh, self.metadata)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "mean_ospa", "runs", "failures"])
        fails = {}
        for name, _, _ in self.failures:
            fails[name] = fails.get(name, 0) + 1
        for a, v in self.summary().items():
            runs = len({r[1] for r in self.rows if r[0] == a})
            w.writerow([a, repr(v), runs, fails.get(a, 0)])


def _header(fh, meta):
    for k, v in meta.items():
        fh.write(f"# {k}={v}\n")


def max_workers() -> int:
    cap = os.environ.get(WORKERS_ENV)
    n = os.cpu_count() or 1
    return max(1, min(n, int(cap))) if cap else n


def _replica_job(args):
    return run_replica(*args)


def monte_carlo(algorithms, cfg: ScenarioConfig, runs: int, params: OspaParams = OspaParams(),
                window: int = 2, transition=None, workers: int | None = None,
                tracker_overrides=None) -> MonteCarloResult:
    """Replicas use seeds ``cfg.seed + i``; results are ordered by run, so the
    output does not depend on the worker count."""
    if runs < 1:
        raise InvalidArgument("runs must be >= 1")
    for a in algorithms:
        parse_algorithm(a)
    workers = workers or max_workers()
    jobs = [(cfg, list(algorithms), i, params, window, transition, tracker_overrides)
            for i in range(runs)]
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replica_job, jobs))
    else:
        results = [_replica_job(j) for j in jobs]
    rows, failures = [], []
    for r, f in results:
        rows += r
        failures += f
    meta = {"ospa_p": params.p, "ospa_c": params.c, "runs": runs, "window": window,
            "seed": cfg.seed, "algorithms": ",".join(algorithms), "failures": len(failures)}
    return MonteCarloResult(rows, failures, list(algorithms), meta)
