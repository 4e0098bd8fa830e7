"""Dense-tableau two-phase simplex with Bland's rule for equality-form LPs.

Solves ``min c'x  s.t.  A x = b, x >= 0``. Bland's rule (lowest-index
entering variable, lowest-index leaving variable on ratio ties) makes the
pivot sequence deterministic and cycle-free; the returned point is a basic
feasible solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-9


class SolverStall(RuntimeError):
    """Iteration limit reached before optimality."""


class Infeasible(RuntimeError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    iterations: int
    basis: list


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])
    basis[row] = col


def _run(T, basis, ncols, limit, used):
    """Bland iterations on tableau ``T`` whose last row is the reduced-cost row."""
    m = T.shape[0] - 1
    it = used
    while True:
        red = T[m, :ncols]
        neg = np.flatnonzero(red < -EPS)
        if len(neg) == 0:
            return it
        if it >= limit:
            raise SolverStall(f"simplex exceeded {limit} iterations")
        col = int(neg[0])
        colv = T[:m, col]
        pos = np.flatnonzero(colv > EPS)
        if len(pos) == 0:
            raise RuntimeError("LP unbounded; association polytopes are bounded")
        ratios = T[pos, -1] / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + EPS * max(1.0, abs(best))]
        row = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, basis, row, col)
        it += 1


def simplex(c, A, b, max_iter: int | None = None) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    m, n = A.shape
    if max_iter is None:
        max_iter = 10 * (m + n)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # crash basis from existing unit columns, artificials elsewhere
    basis = [-1] * m
    nz = A != 0
    for j in np.flatnonzero(nz.sum(axis=0) == 1):
        i = int(np.flatnonzero(nz[:, j])[0])
        if basis[i] < 0 and A[i, j] > 0:
            basis[i] = int(j)
    art_rows = [i for i in range(m) if basis[i] < 0]
    n_art = len(art_rows)
    T = np.zeros((m + 1, n + n_art + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    for k, i in enumerate(art_rows):
        T[i, n + k] = 1.0
        basis[i] = n + k
    for i in range(m):
        j = basis[i]
        if j < n:
            T[i] /= T[i, j]
    it = 0
    if n_art:
        T[m, n:n + n_art] = 1.0
        for i in art_rows:
            T[m] -= T[i]
        it = _run(T, basis, n + n_art, max_iter, it)
        if T[m, -1] < -1e-7:
            raise Infeasible("LP infeasible")
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= n:
                cand = np.flatnonzero(np.abs(T[i, :n]) > EPS)
                if len(cand):
                    _pivot(T, basis, i, int(cand[0]))
                    keep.append(i)
            else:
                keep.append(i)
        T = np.vstack([T[keep][:, list(range(n)) + [T.shape[1] - 1]], np.zeros((1, n + 1))])
        basis = [basis[i] for i in keep]
        m = len(keep)
    T[m, :n] = c
    T[m, -1] = 0.0
    for i in range(m):
        T[m] -= c[basis[i]] * T[i]
    it = _run(T, basis, n, max_iter, it)
    x = np.zeros(n)
    for i in range(m):
        x[basis[i]] = T[i, -1]
    x[np.abs(x) < 1e-12] = 0.0
    return SimplexResult(x, float(c @ x), it, basis)
