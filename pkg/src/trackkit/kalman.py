"""Constant-velocity Kalman filter over box state in image space.

State is the 8-vector (cx, cy, a, h, vcx, vcy, va, vh): box center, aspect
ratio w/h, height, and their per-frame velocities.  Process and observation
noise scale with the box height through two weights (defaults h/20 for
positions, h/160 for velocities); both are exposed as tunables.  Innovation
covariances are factored
with Cholesky; a singular factorization raises ``numpy.linalg.LinAlgError``.

States are immutable values and every operation is pure, so one tracker can
own its states without any shared mutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import BBox

__all__ = [
    "KalmanState",
    "STD_WEIGHT_POSITION",
    "STD_WEIGHT_VELOCITY",
    "to_measurement",
    "from_state",
    "initiate",
    "predict",
    "update",
    "gating_distance",
]

STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160

_DIM = 8
_SYM_TOL = 1e-9

# transition: position block += velocity block
_F = np.eye(_DIM)
_F[:4, 4:] = np.eye(4)
# observation selects the first four components
_H = np.eye(4, _DIM)


@dataclass(frozen=True)
class KalmanState:
    """Mean and covariance of the 8-dim box state."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if mean.shape != (_DIM,):
            raise ValueError(f"mean must have shape ({_DIM},), got {mean.shape}")
        if cov.shape != (_DIM, _DIM):
            raise ValueError(f"covariance must have shape ({_DIM},{_DIM}), got {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("state entries must be finite")
        if np.max(np.abs(cov - cov.T)) > _SYM_TOL:
            raise ValueError("covariance must be symmetric")
        mean = mean.copy()
        cov = cov.copy()
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def to_measurement(box: BBox) -> np.ndarray:
    """Convert a box to the (cx, cy, a, h) measurement vector."""
    if box.w <= 0 or box.h <= 0:
        raise ValueError(f"box must have positive size, got w={box.w}, h={box.h}")
    return np.array([box.x + box.w / 2.0, box.y + box.h / 2.0, box.w / box.h, box.h])


def from_state(state: KalmanState) -> BBox:
    """Invert :func:`to_measurement` on the position block of the state mean."""
    cx, cy, a, h = state.mean[:4]
    w = a * h
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def _check_measurement(measurement: np.ndarray) -> np.ndarray:
    m = np.asarray(measurement, dtype=float)
    if m.shape != (4,):
        raise ValueError(f"measurement must have shape (4,), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("measurement must be finite")
    if m[2] <= 0 or m[3] <= 0:
        raise ValueError(f"measurement needs a > 0 and h > 0, got a={m[2]}, h={m[3]}")
    return m


def initiate(
    measurement: np.ndarray,
    pos_weight: float = STD_WEIGHT_POSITION,
    vel_weight: float = STD_WEIGHT_VELOCITY,
) -> KalmanState:
    """New track state from an unassociated measurement; velocities start at zero."""
    m = _check_measurement(measurement)
    mean = np.concatenate([m, np.zeros(4)])
    h = m[3]
    std = np.array(
        [
            2 * pos_weight * h,
            2 * pos_weight * h,
            1e-2,
            2 * pos_weight * h,
            10 * vel_weight * h,
            10 * vel_weight * h,
            1e-5,
            10 * vel_weight * h,
        ]
    )
    return KalmanState(mean, np.diag(std**2))


def _process_noise(h: float, pos_weight: float, vel_weight: float) -> np.ndarray:
    std = np.array(
        [
            pos_weight * h,
            pos_weight * h,
            1e-2,
            pos_weight * h,
            vel_weight * h,
            vel_weight * h,
            1e-5,
            vel_weight * h,
        ]
    )
    return np.diag(std**2)


def _observation_noise(h: float, pos_weight: float) -> np.ndarray:
    std = np.array([pos_weight * h, pos_weight * h, 1e-1, pos_weight * h])
    return np.diag(std**2)


def predict(
    state: KalmanState,
    pos_weight: float = STD_WEIGHT_POSITION,
    vel_weight: float = STD_WEIGHT_VELOCITY,
) -> KalmanState:
    """One constant-velocity step: positions gain velocities, uncertainty grows."""
    q = _process_noise(state.mean[3], pos_weight, vel_weight)
    mean = _F @ state.mean
    cov = _F @ state.covariance @ _F.T + q
    return KalmanState(mean, 0.5 * (cov + cov.T))


def _project(
    state: KalmanState, pos_weight: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # predicted measurement mean, innovation covariance S, observation noise R
    r = _observation_noise(state.mean[3], pos_weight)
    s = _H @ state.covariance @ _H.T + r
    return _H @ state.mean, 0.5 * (s + s.T), r


def update(
    state: KalmanState,
    measurement: np.ndarray,
    pos_weight: float = STD_WEIGHT_POSITION,
    vel_weight: float = STD_WEIGHT_VELOCITY,
) -> KalmanState:
    """Standard correction step with the Joseph-form covariance update."""
    del vel_weight  # accepted for signature symmetry with predict
    m = _check_measurement(measurement)
    projected_mean, s, r = _project(state, pos_weight)
    chol = scipy.linalg.cho_factor(s, lower=True, check_finite=False)
    gain = scipy.linalg.cho_solve(chol, (state.covariance @ _H.T).T, check_finite=False).T
    innovation = m - projected_mean
    mean = state.mean + gain @ innovation
    ikh = np.eye(_DIM) - gain @ _H
    cov = ikh @ state.covariance @ ikh.T + gain @ r @ gain.T
    return KalmanState(mean, 0.5 * (cov + cov.T))


def gating_distance(
    state: KalmanState,
    measurement: np.ndarray,
    pos_weight: float = STD_WEIGHT_POSITION,
) -> float:
    """Squared Mahalanobis distance of a measurement from the projected state."""
    m = _check_measurement(measurement)
    projected_mean, s, _ = _project(state, pos_weight)
    chol = scipy.linalg.cholesky(s, lower=True, check_finite=False)
    z = scipy.linalg.solve_triangular(chol, m - projected_mean, lower=True, check_finite=False)
    return float(z @ z)
