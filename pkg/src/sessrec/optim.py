"""Adagrad / rmsprop parameter updates with optional momentum.

Updates honor gradient sparsity at row granularity: rows whose gradient is
entirely zero are left untouched, accumulators and velocity included, so a
sparse row update is bit-identical to the equivalent dense one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import make_rng

__all__ = ["OptimState", "adagrad_update", "rmsprop_update", "dropout_mask"]

EPSILON = 1e-6


@dataclass
class OptimState:
    """Per-parameter accumulator (and velocity when momentum is used)."""

    acc: np.ndarray
    vel: np.ndarray | None = None
    epsilon: float = EPSILON

    @classmethod
    def for_param(cls, param: np.ndarray, momentum: float = 0.0) -> "OptimState":
        vel = np.zeros_like(param) if momentum > 0.0 else None
        return cls(acc=np.zeros_like(param), vel=vel)


def _resolve_rows(grad: np.ndarray, rows) -> tuple[np.ndarray, np.ndarray]:
    """Rows to touch and their gradient slices.

    With ``rows=None`` the gradient is dense and all-zero rows are skipped;
    otherwise ``grad`` holds just the listed rows.
    """
    if rows is None:
        if grad.ndim == 1:
            idx = np.flatnonzero(grad != 0.0)
        else:
            idx = np.flatnonzero(np.any(grad != 0.0, axis=-1))
        return idx, grad[idx]
    idx = np.asarray(rows, dtype=np.intp)
    return idx, np.asarray(grad, dtype=np.float64)


def _apply_step(
    param: np.ndarray,
    state: OptimState,
    idx: np.ndarray,
    step: np.ndarray,
    momentum: float,
) -> None:
    if momentum > 0.0:
        if state.vel is None:
            state.vel = np.zeros_like(param)
        state.vel[idx] = momentum * state.vel[idx] + step
        param[idx] -= state.vel[idx]
    else:
        param[idx] -= step


def adagrad_update(
    param: np.ndarray,
    grad: np.ndarray,
    state: OptimState,
    lr: float,
    momentum: float = 0.0,
    rows=None,
) -> None:
    """In-place adagrad step: acc += g^2; param -= lr * g / sqrt(acc + eps)."""
    if rows is None and grad.shape != param.shape:
        raise ValueError(f"grad shape {grad.shape} != param shape {param.shape}")
    idx, g = _resolve_rows(np.asarray(grad, dtype=np.float64), rows)
    if idx.size == 0:
        return
    state.acc[idx] += g * g
    step = lr * g / np.sqrt(state.acc[idx] + state.epsilon)
    _apply_step(param, state, idx, step, momentum)


def rmsprop_update(
    param: np.ndarray,
    grad: np.ndarray,
    state: OptimState,
    lr: float,
    decay: float = 0.9,
    momentum: float = 0.0,
    rows=None,
) -> None:
    """In-place rmsprop step with exponentially decayed squared-gradient average."""
    if not 0.0 <= decay < 1.0:
        raise ValueError(f"rmsprop decay must be in [0, 1), got {decay}")
    if rows is None and grad.shape != param.shape:
        raise ValueError(f"grad shape {grad.shape} != param shape {param.shape}")
    idx, g = _resolve_rows(np.asarray(grad, dtype=np.float64), rows)
    if idx.size == 0:
        return
    state.acc[idx] = decay * state.acc[idx] + (1.0 - decay) * g * g
    step = lr * g / np.sqrt(state.acc[idx] + state.epsilon)
    _apply_step(param, state, idx, step, momentum)


def dropout_mask(
    shape: tuple[int, ...],
    rate: float,
    rng: np.random.Generator | int,
    training: bool = True,
) -> np.ndarray:
    """Inverted-dropout multiplier: keep with prob 1-rate, scale kept by 1/(1-rate).

    At inference (``training=False``) the mask is all ones, so no rescaling
    is ever needed at serving time.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return np.ones(shape)
    if isinstance(rng, int):
        rng = make_rng(rng)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)
