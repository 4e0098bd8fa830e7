"""Linear motion and measurement models on the state [px, vx, py, vy]."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import InvalidArgument

STATE_DIM = 4
MEAS_DIM = 2
SMALL_OMEGA = 1e-9


@dataclass(frozen=True)
class MotionModel:
    label: str
    F: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        if F.shape != (STATE_DIM, STATE_DIM) or Q.shape != (STATE_DIM, STATE_DIM):
            raise InvalidArgument(f"model {self.label!r}: F and Q must be 4x4")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(Q))):
            raise InvalidArgument(f"model {self.label!r}: non-finite entries")
        if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise InvalidArgument(f"model {self.label!r}: Q not symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-9:
            raise InvalidArgument(f"model {self.label!r}: Q not PSD")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)


@dataclass(frozen=True)
class MeasurementModel:
    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if H.shape != (MEAS_DIM, STATE_DIM) or R.shape != (MEAS_DIM, MEAS_DIM):
            raise InvalidArgument("H must be 2x4 and R 2x2")
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise InvalidArgument("R must be symmetric positive definite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)


def _finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgument(f"non-finite argument {v!r}")


def cv_transition(dt: float) -> np.ndarray:
    """Constant-velocity transition over ``dt`` seconds."""
    _finite(dt)
    F = np.eye(STATE_DIM)
    F[0, 1] = dt
    F[2, 3] = dt
    return F


def ct_transition(omega: float, dt: float) -> np.ndarray:
    """Coordinated-turn transition with turn rate ``omega`` (rad/s).

    Positive ``omega`` turns counter-clockwise. Falls back to the CV matrix
    when ``|omega| < 1e-9``.
    """
    _finite(omega, dt)
    if dt < 0:
        raise InvalidArgument("dt must be non-negative")
    if abs(omega) < SMALL_OMEGA:
        return cv_transition(dt)
    s = math.sin(omega * dt)
    c = math.cos(omega * dt)
    a = s / omega
    b = (1.0 - c) / omega
    return np.array(
        [
            [1.0, a, 0.0, -b],
            [0.0, c, 0.0, -s],
            [0.0, b, 1.0, a],
            [0.0, s, 0.0, c],
        ]
    )


def process_noise(q: float, dt: float) -> np.ndarray:
    """White-noise-acceleration covariance with intensity ``q``.

    Both position blocks use dt**3/3 on the diagonal.
    """
    _finite(q, dt)
    if q < 0:
        raise InvalidArgument("process noise intensity must be non-negative")
    if dt <= 0:
        raise InvalidArgument("dt must be positive")
    block = np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
    Q = np.zeros((STATE_DIM, STATE_DIM))
    Q[:2, :2] = q * block
    Q[2:, 2:] = q * block
    return Q


def position_measurement(sigma: float) -> MeasurementModel:
    """Position-only sensor with isotropic noise of std ``sigma`` metres."""
    _finite(sigma)
    if sigma <= 0:
        raise InvalidArgument("sigma must be positive")
    H = np.zeros((MEAS_DIM, STATE_DIM))
    H[0, 0] = 1.0
    H[1, 2] = 1.0
    return MeasurementModel(H=H, R=sigma**2 * np.eye(MEAS_DIM))


def cv_model(q: float, dt: float, label: str | None = None) -> MotionModel:
    return MotionModel(label or f"CV(q={q:g})", cv_transition(dt), process_noise(q, dt))


def ct_model(omega: float, q: float, dt: float, label: str | None = None) -> MotionModel:
    return MotionModel(
        label or f"CT(w={omega:g})", ct_transition(omega, dt), process_noise(q, dt)
    )


def default_model_set(dt: float = 5.0, q_low: float = 0.01, q_high: float = 4.0):
    """Two CV models differing only in process-noise intensity."""
    return [cv_model(q_low, dt, "CV-low"), cv_model(q_high, dt, "CV-high")]
