"""Independent reference computations and random instance generators.

Used by the self-test command and the test suite. Nothing here is on the
tracking path; everything is brute force so it can be trusted on small
inputs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .association import AssociationProblem, build_lp, check_prop2, solve_ip, solve_lp
from .hypothesis import LocalHypothesis
from .rcmkf import (Belief, DiscreteMatrixDistribution, effective_process_cov, predict,
                    update)


# --- association instances ------------------------------------------------

def _col(target, models, meas, cost):
    return LocalHypothesis(target, models, meas, cost, -cost)


def _meas_tuples(meas_counts):
    return list(itertools.product(*[range(R + 1) for R in meas_counts]))


def dummy_target_columns(meas_counts):
    """One zero-cost dummy-target column per real measurement."""
    N = len(meas_counts)
    out = []
    for n, R in enumerate(meas_counts):
        for r in range(1, R + 1):
            meas = tuple(r if m == n else 0 for m in range(N))
            out.append(_col(0, (0,) * N, meas, 0.0))
    return out


def random_association_problem(rng: np.random.Generator, T: int, meas_counts,
                               density: float = 0.5, cost_scale: float = 3.0):
    """Random track hypotheses over ``meas_counts``; always feasible.

    Each target gets its all-dummy hypothesis plus a random subset of the
    other measurement tuples with normal costs.
    """
    N = len(meas_counts)
    hyps = []
    for tau in range(1, T + 1):
        hyps.append(_col(tau, (0,) * N, (0,) * N, float(rng.normal(0, 1))))
        for r in _meas_tuples(meas_counts)[1:]:
            if rng.random() < density:
                hyps.append(_col(tau, (0,) * N, r,
                                 float(rng.normal(-1.0, cost_scale))))
    hyps += dummy_target_columns(meas_counts)
    return AssociationProblem(hyps, T, tuple(meas_counts))


def prop2_instance(rng: np.random.Generator, T: int | None = None, N: int | None = None):
    """Instance whose designated selection takes each target's cheapest
    hypothesis, with zero-cost dummy targets. Returns ``(problem, delta)``."""
    T = T or int(rng.integers(1, 5))
    N = N or int(rng.integers(1, 4))
    meas_counts = tuple(int(rng.integers(T, T + 3)) for _ in range(N))
    # designated hypotheses use disjoint measurements (or the dummy)
    perms = [rng.permutation(R)[:T] + 1 for R in meas_counts]
    designated = []
    for tau in range(T):
        r = tuple(int(perms[n][tau]) if rng.random() < 0.8 else 0 for n in range(N))
        designated.append(r)
    hyps = []
    for tau in range(1, T + 1):
        c_min = float(rng.normal(-2.0, 3.0))
        hyps.append(_col(tau, (0,) * N, designated[tau - 1], c_min))
        for r in _meas_tuples(meas_counts):
            if r == designated[tau - 1] or rng.random() > 0.4:
                continue
            extra = 0.0 if rng.random() < 0.1 else float(rng.exponential(2.0))
            hyps.append(_col(tau, (0,) * N, r, c_min + extra))
        if designated[tau - 1] != (0,) * N and not any(
                h.target == tau and h.meas == (0,) * N for h in hyps):
            hyps.append(_col(tau, (0,) * N, (0,) * N,
                             c_min + float(rng.exponential(2.0))))
    for r in _meas_tuples(meas_counts)[1:]:
        if sum(1 for v in r if v) > 1 and rng.random() < 0.1:
            hyps.append(_col(0, (0,) * N, r, 0.0))
    hyps += dummy_target_columns(meas_counts)
    problem = AssociationProblem(hyps, T, meas_counts)
    delta = np.zeros(len(hyps))
    used = set()
    for j, h in enumerate(hyps[:]):
        if h.target and h.meas == designated[h.target - 1] and h.target not in used:
            delta[j] = 1.0
            used.add(h.target)
    covered = {(n, r) for j in np.flatnonzero(delta) for n, r in enumerate(hyps[j].meas) if r}
    for j, h in enumerate(hyps):
        if h.target == 0 and sum(1 for v in h.meas if v) == 1:
            key = next((n, r) for n, r in enumerate(h.meas) if r)
            if key not in covered:
                delta[j] = 1.0
                covered.add(key)
    assert check_prop2(problem, delta)
    return problem, delta


# --- brute-force solvers --------------------------------------------------

def exhaustive_ip(A, c):
    """Minimum of ``c @ x`` over all 0-1 ``x`` with ``A x = 1`` by exact-cover search.

    Returns ``(objective, x)``; ``(inf, None)`` if infeasible.
    """
    A = np.asarray(A, bool)
    c = np.asarray(c, float)
    m, n = A.shape
    cols_of = [np.flatnonzero(A[i]) for i in range(m)]
    best = [math.inf, None]

    def search(covered, chosen, cost):
        free = np.flatnonzero(~covered)
        if len(free) == 0:
            if cost < best[0]:
                best[0], best[1] = cost, list(chosen)
            return
        i = free[0]
        for j in cols_of[i]:
            if not (A[:, j] & covered).any():
                chosen.append(j)
                search(covered | A[:, j], chosen, cost + c[j])
                chosen.pop()

    search(np.zeros(m, bool), [], 0.0)
    if best[1] is None:
        return math.inf, None
    x = np.zeros(n)
    x[best[1]] = 1.0
    return float(c @ x), x


def vertex_lp(A, b, c, tol: float = 1e-9):
    """Minimum of ``c @ x`` s.t. ``A x = b, x >= 0`` by enumerating basic solutions."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    # keep a maximal independent row subset
    rows = []
    for i in range(A.shape[0]):
        if np.linalg.matrix_rank(A[rows + [i]]) == len(rows) + 1:
            rows.append(i)
    Ar, br = A[rows], b[rows]
    m, n = Ar.shape
    best = math.inf
    for basis in itertools.combinations(range(n), m):
        B = Ar[:, basis]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, br)
        if xb.min() < -tol:
            continue
        x = np.zeros(n)
        x[list(basis)] = xb
        if np.abs(A @ x - b).max() > 1e-7:
            continue
        best = min(best, float(c @ x))
    return best


def brute_force_ospa(X, Y, p: float = 2.0, c: float = 1000.0) -> float:
    X = np.asarray(X, float).reshape(-1, 2)
    Y = np.asarray(Y, float).reshape(-1, 2)
    if len(X) > len(Y):
        X, Y = Y, X
    m, n = len(X), len(Y)
    if n == 0:
        return 0.0
    if m == 0:
        return c
    D = np.minimum(np.linalg.norm(X[:, None] - Y[None], axis=2), c) ** p
    best = min(sum(D[i, perm[i]] for i in range(m))
               for perm in itertools.permutations(range(n), m))
    return ((best + c**p * (n - m)) / n) ** (1 / p)


# --- filters --------------------------------------------------------------

def kf_reference(x, P, F, Q, H, R, z):
    """Textbook Kalman step in Joseph form with an explicit inverse."""
    x = F @ x
    P = F @ P @ F.T + Q
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    x = x + K @ (z - H @ x)
    I_KH = np.eye(len(x)) - K @ H
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    return x, 0.5 * (P + P.T)


def random_spd(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T + n * np.eye(n))


def degenerate_rcmkf_deviation(rng: np.random.Generator, steps: int = 100, n: int = 4,
                               m: int = 2) -> float:
    """Max deviation of RCMKF with singleton distributions from ``kf_reference``."""
    F = np.eye(n) + 0.1 * rng.normal(size=(n, n))
    F /= max(1.0, np.abs(np.linalg.eigvals(F)).max())
    H = rng.normal(size=(m, n))
    Q = random_spd(rng, n, 0.1)
    R = random_spd(rng, m, 0.5)
    x0 = rng.normal(size=n)
    P0 = random_spd(rng, n)
    fd = DiscreteMatrixDistribution.singleton(F, Q)
    hd = DiscreteMatrixDistribution.singleton(H, R)
    b = Belief.from_prior(x0, P0)
    x, P = x0.copy(), P0.copy()
    truth = rng.multivariate_normal(x0, P0)
    worst = 0.0
    for _ in range(steps):
        truth = F @ truth + rng.multivariate_normal(np.zeros(n), Q)
        z = H @ truth + rng.multivariate_normal(np.zeros(m), R)
        b = update(predict(b, fd), hd, z)
        x, P = kf_reference(x, P, F, Q, H, R, z)
        worst = max(worst, np.abs(b.mean - x).max() / max(1.0, np.abs(x).max()),
                    np.abs(b.cov - P).max() / max(1.0, np.abs(P).max()))
    return float(worst)


def moment_law_check(rng: np.random.Generator, samples: int = 100_000, steps: int = 8):
    """Scalar system x' = F x + v with F in {a1, a2}.

    Simulates ``samples`` trajectories and compares the sample mean and
    second moment at every step with the recursion, and the sample
    covariance of the effective noise (F - Fbar) x + v with Q-tilde.
    Returns ``(max_moment_z, max_q_rel_err)``: the largest deviation in
    standard errors and the largest relative Frobenius error.
    """
    a = np.array([0.9, -0.6])
    q = np.array([0.5, 1.5])
    p = np.array([0.3, 0.7])
    dist = DiscreteMatrixDistribution(a.reshape(2, 1, 1), q.reshape(2, 1, 1), p)
    b = Belief.from_prior(np.array([2.0]), np.array([[1.0]]))
    x = rng.normal(2.0, 1.0, samples)
    Fbar = float(p @ a)
    worst_z, worst_q = 0.0, 0.0
    for _ in range(steps):
        idx = rng.choice(2, size=samples, p=p)
        v = rng.normal(0.0, np.sqrt(q[idx]))
        w = (a[idx] - Fbar) * x + v
        Qt = effective_process_cov(dist, b.second_moment)[0, 0]
        q_hat = float(np.var(w))
        worst_q = max(worst_q, abs(q_hat - Qt) / Qt)
        x = a[idx] * x + v
        b = predict(b, dist)
        m1, m2 = b.mean[0], b.second_moment[0, 0]
        se1 = np.std(x) / np.sqrt(samples)
        se2 = np.std(x**2) / np.sqrt(samples)
        worst_z = max(worst_z, abs(x.mean() - m1) / se1, abs(np.mean(x**2) - m2) / se2)
    return float(worst_z), float(worst_q)


# --- self-test suites -----------------------------------------------------

def suite_lp_vertices(rng, count=60):
    bad = 0
    for _ in range(count):
        T = int(rng.integers(1, 3))
        pr = random_association_problem(rng, T, (int(rng.integers(1, 3)),), density=0.7)
        lp = build_lp(pr)
        if lp.A.shape[1] > 14:
            continue
        ref = vertex_lp(lp.A, lp.b, lp.costs)
        got = solve_lp(lp).objective
        bad += abs(ref - got) > 1e-7
    return bad == 0, f"{bad} mismatches"


def suite_ip_exhaustive(rng, count=100):
    bad = 0
    for _ in range(count):
        T = int(rng.integers(1, 4))
        pr = random_association_problem(rng, T, (int(rng.integers(1, 4)), int(rng.integers(1, 4))))
        lp = build_lp(pr)
        ref, _ = exhaustive_ip(lp.A, lp.costs)
        got = solve_ip(lp).objective
        bad += abs(ref - got) > 1e-9
    return bad == 0, f"{bad} mismatches"


def suite_prop2(rng, count=100):
    bad = 0
    for _ in range(count):
        pr, delta = prop2_instance(rng)
        lp = build_lp(pr)
        obj = float(lp.costs @ delta)
        bad += abs(solve_lp(lp).objective - obj) > 1e-9 or abs(solve_ip(lp).objective - obj) > 1e-9
    return bad == 0, f"{bad} mismatches"


def suite_rcmkf_kf(rng, count=5):
    worst = max(degenerate_rcmkf_deviation(rng) for _ in range(count))
    return worst <= 1e-10, f"max deviation {worst:.2e}"


def suite_ospa(rng, count=200):
    from .evaluation import OspaParams, ospa
    worst = 0.0
    for _ in range(count):
        X = rng.uniform(0, 3000, (int(rng.integers(0, 6)), 2))
        Y = rng.uniform(0, 3000, (int(rng.integers(0, 6)), 2))
        worst = max(worst, abs(ospa(X, Y, OspaParams()) - brute_force_ospa(X, Y)))
    return worst <= 1e-9, f"max deviation {worst:.2e}"


def suite_moments(rng, samples=100_000):
    z, qerr = moment_law_check(rng, samples)
    return z <= 3.0 and qerr <= 0.05, f"moments {z:.2f} SE, Q-tilde {100 * qerr:.2f}%"


SUITES = [
    ("lp-vs-vertices", suite_lp_vertices),
    ("ip-vs-exhaustive", suite_ip_exhaustive),
    ("lp-ip-equivalence", suite_prop2),
    ("rcmkf-vs-kf", suite_rcmkf_kf),
    ("ospa-vs-brute-force", suite_ospa),
    ("rcmkf-moments", suite_moments),
]


def run_selftest(seed: int = 0):
    """``[(name, passed, detail)]``, each suite on its own seeded stream."""
    out = []
    for i, (name, fn) in enumerate(SUITES):
        try:
            ok, detail = fn(np.random.default_rng([seed, i]))
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"error: {exc!r}"
        out.append((name, bool(ok), detail))
    return out
