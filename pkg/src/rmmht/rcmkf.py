"""Random-coefficient-matrices Kalman filter (RCMKF).

Linear minimum-variance recursion for

    x[k+1] = F_k x[k] + v_k,     z[k+1] = H_k x[k+1] + w_k,

where ``F_k`` and ``H_k`` are drawn independently each step from finite sets
of realizations, each carrying its own noise covariance. The filter runs on
the mean matrices and inflates the noise by the realization spread weighted
with the unconditional second moment E[x x'], which is propagated alongside
the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import InvalidArgument

PROB_TOL = 1e-9
PINV_RTOL = 1e-12
COND_LIMIT = 1e10


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class DiscreteMatrixDistribution:
    """Finite distribution over (matrix, noise covariance) pairs."""

    matrices: np.ndarray  # (K, rows, cols)
    noise_covs: np.ndarray  # (K, rows, rows)
    probs: np.ndarray  # (K,)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        covs = np.asarray(self.noise_covs, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if mats.ndim != 3 or covs.ndim != 3 or probs.ndim != 1:
            raise InvalidArgument("realizations must be stacked as (K, r, c) arrays")
        K, r, _ = mats.shape
        if covs.shape != (K, r, r) or probs.shape != (K,):
            raise InvalidArgument("matrices, noise_covs and probs disagree in shape")
        if K == 0:
            raise InvalidArgument("distribution needs at least one realization")
        if np.any(probs < -PROB_TOL) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise InvalidArgument(f"probabilities must be >= 0 and sum to 1, got {probs}")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "noise_covs", covs)
        object.__setattr__(self, "probs", np.clip(probs, 0.0, None))

    @classmethod
    def from_realizations(cls, realizations: Sequence[tuple]) -> "DiscreteMatrixDistribution":
        """Build from ``[(matrix, noise_cov, probability), ...]``."""
        mats, covs, probs = zip(*realizations)
        return cls(np.stack([np.atleast_2d(m) for m in mats]),
                   np.stack([np.atleast_2d(c) for c in covs]),
                   np.asarray(probs, dtype=float))

    @classmethod
    def singleton(cls, matrix, noise_cov) -> "DiscreteMatrixDistribution":
        return cls.from_realizations([(matrix, noise_cov, 1.0)])

    @property
    def shape(self):
        return self.matrices.shape[1:]

    def sample_index(self, rng: np.random.Generator, size=None):
        return rng.choice(len(self.probs), size=size, p=self.probs)


@dataclass(frozen=True)
class Belief:
    """Estimate, error covariance and unconditional second moment E[x x']."""

    mean: np.ndarray
    cov: np.ndarray
    second_moment: np.ndarray

    @classmethod
    def from_prior(cls, mean, cov) -> "Belief":
        mean = np.asarray(mean, dtype=float)
        cov = symmetrize(np.asarray(cov, dtype=float))
        return cls(mean, cov, symmetrize(np.outer(mean, mean) + cov))


def mean_matrix(dist: DiscreteMatrixDistribution) -> np.ndarray:
    return np.einsum("k,kij->ij", dist.probs, dist.matrices)


def _effective_cov(dist: DiscreteMatrixDistribution, second_moment: np.ndarray) -> np.ndarray:
    second_moment = np.asarray(second_moment, dtype=float)
    cols = dist.shape[1]
    if second_moment.shape != (cols, cols):
        raise InvalidArgument(
            f"second moment is {second_moment.shape}, expected {(cols, cols)}"
        )
    spread = dist.matrices - mean_matrix(dist)
    inflation = np.einsum("k,kij,jl,kml->im", dist.probs, spread, second_moment, spread)
    noise = np.einsum("k,kij->ij", dist.probs, dist.noise_covs)
    return symmetrize(noise + inflation)


def effective_process_cov(dist: DiscreteMatrixDistribution, second_moment) -> np.ndarray:
    """Sum_s p_s [Q_s + (F_s - Fbar) E[xx'] (F_s - Fbar)']."""
    return _effective_cov(dist, second_moment)


def effective_meas_cov(dist: DiscreteMatrixDistribution, second_moment) -> np.ndarray:
    """Sum_m p_m [R_m + (H_m - Hbar) E[xx'] (H_m - Hbar)'] on the predicted moment."""
    return _effective_cov(dist, second_moment)


def innovation_inverse(S: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric innovation covariance, pseudoinverse if near-singular."""
    if S.size == 0:
        return S.copy()
    scale = np.abs(S).max()
    if not np.allclose(S, S.T, rtol=1e-9, atol=1e-9 * max(scale, 1.0)):
        raise RuntimeError("innovation covariance is not symmetric")
    S = symmetrize(S)
    w, V = np.linalg.eigh(S)
    wmax = np.abs(w).max()
    if wmax == 0.0:
        return np.zeros_like(S)
    if w.min() > 0 and wmax / w.min() < COND_LIMIT:
        return symmetrize(np.linalg.solve(S, np.eye(len(S))))
    keep = np.abs(w) > PINV_RTOL * wmax
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return symmetrize((V * inv_w) @ V.T)


def predict(b: Belief, f_dist: DiscreteMatrixDistribution) -> Belief:
    n = len(b.mean)
    if f_dist.shape != (n, n):
        raise InvalidArgument(f"transition is {f_dist.shape}, state has dim {n}")
    F = mean_matrix(f_dist)
    Qt = effective_process_cov(f_dist, b.second_moment)
    return Belief(
        F @ b.mean,
        symmetrize(F @ b.cov @ F.T + Qt),
        symmetrize(F @ b.second_moment @ F.T + Qt),
    )


def gain(P: np.ndarray, H: np.ndarray, R_eff: np.ndarray) -> np.ndarray:
    return P @ H.T @ innovation_inverse(H @ P @ H.T + R_eff)


def update(b: Belief, h_dist: DiscreteMatrixDistribution, z) -> Belief:
    z = np.asarray(z, dtype=float)
    rows, cols = h_dist.shape
    if cols != len(b.mean) or z.shape != (rows,):
        raise InvalidArgument("measurement dimensions disagree with the belief")
    H = mean_matrix(h_dist)
    R_eff = effective_meas_cov(h_dist, b.second_moment)
    K = gain(b.cov, H, R_eff)
    mean = b.mean + K @ (z - H @ b.mean)
    cov = symmetrize((np.eye(cols) - K @ H) @ b.cov)
    return Belief(mean, cov, b.second_moment)
