"""Margin-based softmax loss with difficulty-adaptive negative logits.

The positive logit is s*cos(theta_y + m). Each negative cosine c_j is passed
through N(t, c_j): left unchanged while cos(theta_y + m) >= c_j (easy), and
modulated to c_j * (t + c_j) once it exceeds that threshold (hard). The
difficulty scalar t is an exponential moving average of batch-mean positive
cosines, updated once per batch and never differentiated through.

cos(theta_y + m) is evaluated as cos_y*cos(m) - sqrt(1 - cos_y^2)*sin(m)
with cos_y clamped away from +/-1, so no arccos appears in the forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

_CLAMP = 1.0 - 1e-7
_COS_TOL = 1e-6


@dataclass(frozen=True)
class LossParams:
    m: float = 0.5
    s: float = 64.0

    def __post_init__(self):
        if not (0.0 <= self.m < math.pi / 2):
            raise ParameterError(f"margin m={self.m!r} outside [0, pi/2)")
        if self.s <= 0:
            raise ParameterError(f"scale s={self.s!r} must be positive")


@dataclass(frozen=True)
class CurricularState:
    t: float = 0.0
    ema_momentum: float = 0.99

    def __post_init__(self):
        if not (0.0 <= self.t <= 1.0):
            raise ParameterError(f"t={self.t!r} outside [0, 1]")
        if not (0.0 < self.ema_momentum <= 1.0):
            raise ParameterError(f"ema_momentum={self.ema_momentum!r} outside (0, 1]")


@dataclass(frozen=True)
class CosineBatch:
    cosines: np.ndarray  # (B, n)
    labels: np.ndarray   # (B,) ints in [0, n)

    def __post_init__(self):
        cos = np.asarray(self.cosines, dtype=np.float64)
        labels = np.asarray(self.labels)
        if cos.ndim != 2 or cos.shape[0] < 1 or cos.shape[1] < 1:
            raise ParameterError(f"cosines must be (B, n) with B,n >= 1, got {cos.shape}")
        if labels.shape != (cos.shape[0],):
            raise ParameterError(f"labels shape {labels.shape} does not match batch {cos.shape[0]}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ParameterError("labels must be integers")
        if labels.min() < 0 or labels.max() >= cos.shape[1]:
            raise ParameterError(f"labels outside [0, {cos.shape[1]})")
        if np.abs(cos).max() > 1.0 + _COS_TOL:
            raise ParameterError(f"|cosine| exceeds 1 + {_COS_TOL}")
        object.__setattr__(self, "cosines", cos)
        object.__setattr__(self, "labels", np.asarray(labels, dtype=np.int64))


def _logits(batch: CosineBatch, params: LossParams, state: CurricularState):
    """Shared forward plumbing: scaled logits plus the pieces gradients need."""
    cos = np.clip(batch.cosines, -1.0, 1.0)
    rows = np.arange(cos.shape[0])
    cos_y = np.clip(cos[rows, batch.labels], -_CLAMP, _CLAMP)
    sin_y = np.sqrt(1.0 - cos_y * cos_y)
    threshold = cos_y * math.cos(params.m) - sin_y * math.sin(params.m)  # cos(theta_y + m)
    hard = cos > threshold[:, np.newaxis]
    hard[rows, batch.labels] = False
    modulated = np.where(hard, cos * (state.t + cos), cos)
    logits = params.s * modulated
    logits[rows, batch.labels] = params.s * threshold
    return logits, cos, cos_y, sin_y, hard, rows


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def update_t(state: CurricularState, batch_positive_cosines) -> CurricularState:
    """EMA step over the batch-mean positive cosine, clamped to [0, 1]."""
    values = np.asarray(batch_positive_cosines, dtype=np.float64).ravel()
    if values.size == 0:
        return state
    mean = float(np.clip(values, -1.0, 1.0).mean())
    new_t = state.ema_momentum * state.t + (1.0 - state.ema_momentum) * mean
    return CurricularState(t=float(np.clip(new_t, 0.0, 1.0)),
                           ema_momentum=state.ema_momentum)


def curricular_forward(batch: CosineBatch, params: LossParams,
                       state: CurricularState) -> tuple[float, CurricularState]:
    """Mean cross-entropy at the margin-shifted positive logit, plus EMA step."""
    logits, cos, _cos_y, _sin_y, _hard, rows = _logits(batch, params, state)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[rows, batch.labels]))
    new_state = update_t(state, cos[rows, batch.labels])
    return loss, new_state


def curricular_grad(batch: CosineBatch, params: LossParams,
                    state: CurricularState) -> np.ndarray:
    """Exact d(mean loss)/d(cosine) for every batch entry; t held constant."""
    logits, cos, cos_y, sin_y, hard, rows = _logits(batch, params, state)
    p = _softmax(logits)
    b = cos.shape[0]
    # negatives: dN/dc is 1 on the easy branch, t + 2c on the hard branch
    dlogit_dcos = np.where(hard, state.t + 2.0 * cos, 1.0)
    grad = (params.s / b) * p * dlogit_dcos
    # positive: d cos(theta_y + m)/d cos_y, evaluated at the clamped cosine
    dpos = math.cos(params.m) + math.sin(params.m) * cos_y / sin_y
    grad[rows, batch.labels] = (params.s / b) * (p[rows, batch.labels] - 1.0) * dpos
    return grad
