"""Association problem: LP relaxation, exact 0-1 IP, marginals, track birth LP.

Rows of the constraint system are the targets 1..T followed by the real
measurements ``(scan, index)``; one column per local hypothesis. Every
column is a 0/1 vector with at most one target row and at most one row per
scan.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import InvalidArgument
from .hypothesis import (LocalHypothesis, Scan, ScoringParams, log_gaussian, mahalanobis_sq,
                         pure_prediction_advance)
from .simplex import Infeasible, simplex

INTEGRAL_TOL = 1e-9


class InfeasibleStructure(InvalidArgument):
    """A target or measurement is not covered by any hypothesis."""


@dataclass
class AssociationProblem:
    hypotheses: list
    num_targets: int
    meas_counts: tuple
    n_models: int = 1
    meas_keys: list | None = None  # rows for (scan, index); default every measurement

    @property
    def N(self) -> int:
        return len(self.meas_counts)

    def measurement_rows(self) -> list:
        if self.meas_keys is not None:
            return list(self.meas_keys)
        return [(n, r) for n, R in enumerate(self.meas_counts) for r in range(1, R + 1)]


@dataclass
class LinearProgram:
    costs: np.ndarray
    A: np.ndarray
    b: np.ndarray
    row_labels: list

    @property
    def shape(self):
        return self.A.shape

    def dump(self) -> str:
        """Plain-text tableau: cost header, then one constraint per line."""
        lines = [f"# rows={self.A.shape[0]} cols={self.A.shape[1]}",
                 "cost " + " ".join(repr(float(v)) for v in self.costs)]
        for label, row, rhs in zip(self.row_labels, self.A, self.b):
            cols = " ".join(str(j) for j in np.flatnonzero(row))
            lines.append(f"{label}: {cols} = {rhs:g}")
        return "\n".join(lines) + "\n"


@dataclass
class AssociationSolution:
    probs: np.ndarray
    objective: float
    is_integral: bool
    iterations: int
    optimal: bool = True
    nodes: int = 0


@dataclass
class Marginals:
    assoc: np.ndarray  # (T, R1 + 1), column 0 is the dummy measurement
    model: np.ndarray  # (T, S)


def build_lp(problem: AssociationProblem) -> LinearProgram:
    T = problem.num_targets
    meas_rows = problem.measurement_rows()
    index = {key: T + i for i, key in enumerate(meas_rows)}
    hyps = problem.hypotheses
    A = np.zeros((T + len(meas_rows), len(hyps)))
    for j, h in enumerate(hyps):
        if h.target:
            if not 1 <= h.target <= T:
                raise InvalidArgument(f"hypothesis {j} names unknown target {h.target}")
            A[h.target - 1, j] = 1.0
        for n, r in enumerate(h.meas):
            if r:
                row = index.get((n, r))
                if row is None:
                    if problem.meas_keys is None:
                        raise InvalidArgument(f"hypothesis {j} names unknown measurement {(n, r)}")
                    continue
                A[row, j] = 1.0
    empty = np.flatnonzero(A.sum(axis=1) == 0)
    if len(empty):
        i = int(empty[0])
        what = f"target {i + 1}" if i < T else f"measurement {meas_rows[i - T]}"
        raise InfeasibleStructure(f"{what} is not covered by any hypothesis")
    labels = [f"target {t}" for t in range(1, T + 1)] + [f"meas {n}:{r}" for n, r in meas_rows]
    costs = np.array([h.cost for h in hyps], dtype=float)
    return LinearProgram(costs, A, np.ones(A.shape[0]), labels)


def _integral(x) -> bool:
    return bool(np.all(np.abs(x - np.round(x)) <= INTEGRAL_TOL))


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> AssociationSolution:
    res = simplex(lp.costs, lp.A, lp.b, max_iter=max_iter)
    x = np.clip(res.x, 0.0, 1.0)
    return AssociationSolution(x, float(lp.costs @ x), _integral(x), res.iterations)


def solve_ip(lp: LinearProgram, node_budget: int = 1_000_000) -> AssociationSolution:
    """Exact set-partitioning solve by depth-first branch-and-bound on the LP bound.

    Branches on the most fractional variable, 1-branch first. Fixing a
    column to 1 removes its rows and every column meeting them; fixing to 0
    removes the column.
    """
    A = lp.A.astype(bool)
    c = lp.costs
    n = A.shape[1]
    best = {"obj": math.inf, "x": None}
    counters = {"nodes": 0, "iters": 0}

    def node(rows, cols, fixed_cost, chosen):
        if counters["nodes"] >= node_budget:
            return
        counters["nodes"] += 1
        if not rows.any():
            if fixed_cost < best["obj"] - 1e-12:
                best["obj"], best["x"] = fixed_cost, list(chosen)
            return
        sub = A[np.ix_(rows, cols)]
        if not sub.any(axis=1).all():
            return
        col_idx = np.flatnonzero(cols)
        try:
            res = simplex(c[col_idx], sub.astype(float), np.ones(sub.shape[0]))
        except Infeasible:
            return
        counters["iters"] += res.iterations
        if fixed_cost + res.objective >= best["obj"] - 1e-9:
            return
        x = res.x
        frac = np.abs(x - np.round(x))
        if frac.max() <= INTEGRAL_TOL:
            sel = chosen + [int(col_idx[k]) for k in np.flatnonzero(x > 0.5)]
            obj = fixed_cost + res.objective
            if obj < best["obj"] - 1e-12:
                best["obj"], best["x"] = obj, sel
            return
        k = int(np.argmin(np.abs(x - 0.5)))
        j = int(col_idx[k])
        # 1-branch
        hit = A[:, j]
        rows1 = rows & ~hit
        cols1 = cols & ~A[hit].any(axis=0)
        node(rows1, cols1, fixed_cost + c[j], chosen + [j])
        # 0-branch
        cols0 = cols.copy()
        cols0[j] = False
        node(rows, cols0, fixed_cost, chosen)

    node(np.ones(A.shape[0], bool), np.ones(n, bool), 0.0, [])
    x = np.zeros(n)
    if best["x"] is None:
        raise Infeasible("no feasible 0-1 assignment found")
    x[best["x"]] = 1.0
    optimal = counters["nodes"] < node_budget
    return AssociationSolution(x, float(c @ x), True, counters["iters"], optimal,
                               counters["nodes"])


def marginals(problem: AssociationProblem, solution: AssociationSolution) -> Marginals:
    R1 = problem.meas_counts[0] if problem.meas_counts else 0
    assoc = np.zeros((problem.num_targets, R1 + 1))
    model = np.zeros((problem.num_targets, problem.n_models))
    for h, p in zip(problem.hypotheses, solution.probs):
        if h.target and p > 0:
            assoc[h.target - 1, h.meas[0]] += p
            model[h.target - 1, h.models[0]] += p
    return Marginals(assoc, model)


def check_prop2(problem: AssociationProblem, candidate) -> bool:
    """True iff the selection takes every target's minimum-cost hypothesis and
    all dummy-target costs are zero (sufficient for LP/IP equivalence)."""
    x = getattr(candidate, "probs", candidate)
    x = np.asarray(x, dtype=float)
    mins = {}
    for h in problem.hypotheses:
        if h.target == 0:
            if h.cost != 0.0:
                return False
        else:
            mins[h.target] = min(mins.get(h.target, math.inf), h.cost)
    for h, v in zip(problem.hypotheses, x):
        if h.target and v > 0.5:
            if h.cost > mins[h.target] + 1e-12 * max(1.0, abs(mins[h.target])):
                return False
    return True


def constraint_residual(lp: LinearProgram, solution: AssociationSolution) -> float:
    return float(np.abs(lp.A @ solution.probs - lp.b).max(initial=0.0))


# --- track birth -----------------------------------------------------------

def _birth_prior(z, sigma, v_max):
    mean = np.array([z[0], 0.0, z[1], 0.0])
    cov = np.diag([sigma**2, v_max**2, sigma**2, v_max**2])
    return mean, cov


def track_init_lp(unassigned_scans: Sequence[Scan], models, meas_model,
                  params: ScoringParams, *, v_max: float = 300.0,
                  cost_mode: str = "log") -> list:
    """Birth LP over measurement tuples drawn from consecutive unassigned scans.

    A candidate tuple takes one real measurement per scan; its first
    measurement is scored as a birth and the remaining ones as detections
    along the best model sequence from a velocity-diffuse prior. Each
    measurement may also be declared clutter at cost 0. Returns
    ``[(r_tuple, probability), ...]`` for candidate tuples with nonzero
    probability.
    """
    N = len(unassigned_scans)
    if N < 2:
        raise InvalidArgument("track initialization needs at least two scans")
    if cost_mode not in ("log", "linear"):
        raise InvalidArgument("cost_mode must be 'log' or 'linear'")
    sigma = math.sqrt(float(meas_model.R[0, 0]))
    advance = pure_prediction_advance(models, meas_model)
    log_pd = math.log(params.P_d)
    candidates = {}
    for r1 in range(1, unassigned_scans[0].count + 1):
        start = _birth_prior(unassigned_scans[0].get(r1), sigma, v_max)

        def recurse(n, state, r_prefix, ll):
            if n == N:
                if r_prefix not in candidates or ll > candidates[r_prefix]:
                    candidates[r_prefix] = ll
                return
            for s in range(len(models)):
                new_state, zhat, S = advance(state, s)
                d2 = mahalanobis_sq(unassigned_scans[n].measurements, zhat, S)
                inside = np.flatnonzero(d2 <= params.gate_gamma)
                if not len(inside):
                    continue
                terms = log_pd + log_gaussian(d2[inside], S) - params.log_clutter_density
                for i, t in zip(inside, terms):
                    recurse(n + 1, new_state, r_prefix + (int(i) + 1,), ll + float(t))

        recurse(1, start, (r1,), params.log_birth_ratio)
    if cost_mode == "log":
        # a tuple with positive cost is dominated by declaring its measurements clutter
        candidates = {r: ll for r, ll in candidates.items() if ll > 0.0}
    if not candidates:
        return []
    tuples = sorted(candidates)
    hyps = []
    for r in tuples:
        ll = candidates[r]
        cost = -ll if cost_mode == "log" else -math.exp(ll)
        hyps.append(LocalHypothesis(1, (0,) * N, r, cost, ll))
    for n, scan in enumerate(unassigned_scans):
        for rn in range(1, scan.count + 1):
            r = tuple(rn if m == n else 0 for m in range(N))
            hyps.append(LocalHypothesis(0, (0,) * N, r, 0.0, 0.0))
    # no target rows: every column is a birth or clutter hypothesis
    hyps = [LocalHypothesis(0, h.models, h.meas, h.cost, h.likelihood_log) for h in hyps]
    problem = AssociationProblem(hyps, 0, tuple(s.count for s in unassigned_scans))
    sol = solve_lp(build_lp(problem))
    return [(r, float(p)) for r, p in zip(tuples, sol.probs[:len(tuples)]) if p > 1e-12]
