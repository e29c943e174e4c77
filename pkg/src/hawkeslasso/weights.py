"""Penalty weight vectors: tail-calibrated, practical single-parameter, adaptive.

The tail-calibrated weights bound the fluctuation |b - E b| per column with
high probability; the practical form collapses the three hyperparameters
(x = alpha log T, mu, eps) into a single gamma. Adaptive weights penalize by
the inverse of a preliminary least-squares fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bernstein import BadMu, _check_mu
from .design import DesignSystem

__all__ = [
    "WeightVector",
    "BadMu",
    "theoretical_weights",
    "practical_weights",
    "adaptive_weights",
]


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative per-column penalties, with a mask for pinned-to-zero columns.

    Columns excluded by an infinite adaptive weight carry excluded=True and a
    finite placeholder in d, so solver arithmetic never sees non-finite values.
    """

    d: np.ndarray
    excluded: np.ndarray
    recipe: str

    def __post_init__(self):
        d = np.ascontiguousarray(self.d, dtype=float)
        excluded = np.ascontiguousarray(self.excluded, dtype=bool)
        if d.shape != excluded.shape:
            raise ValueError("d and excluded must have the same shape")
        if np.any(d[~excluded] < 0) or not np.all(np.isfinite(d)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "excluded", excluded)


def theoretical_weights(
    system: DesignSystem,
    x: float = None,
    mu: float = 0.2,
    eps: float = 0.5,
    b_choice: str = "observed",
    n_cap: float = None,
) -> WeightVector:
    """Per-column d = sqrt(2 (1+eps) Vhat_mu x) + B x / 3.

    Vhat_mu = mu/(mu - phi(mu)) * vhat + B^2 x / (mu - phi(mu)) with
    phi(u) = exp(u) - u - 1. x defaults to log(T). The column bound B is
    either the observed sup of |psi| ("observed") or the envelope value
    ("count-cap"): 1 for spontaneous columns and ||basis||_inf * N for
    interaction columns, with N defaulting to log^2(T).
    """
    gap = _check_mu(mu)
    if x is None:
        x = math.log(system.horizon)
    if x <= 0:
        raise ValueError("need x > 0")
    if b_choice == "observed":
        bound = system.bhat
    elif b_choice == "count-cap":
        if n_cap is None:
            n_cap = math.log(system.horizon) ** 2
        d = system.dictionary
        if d is None or not hasattr(d, "delta"):
            raise ValueError("count-cap bounds need a histogram dictionary")
        bound = np.full(system.block_size, d.delta**-0.5 * n_cap)
        bound[0] = 1.0
    else:
        raise ValueError(f"unknown b_choice: {b_choice!r}")
    vhat_mu = (mu / gap) * system.vhat + bound[None, :] ** 2 * x / gap
    d_vec = np.sqrt(2.0 * (1.0 + eps) * vhat_mu * x) + bound[None, :] * x / 3.0
    return WeightVector(
        d=d_vec,
        excluded=np.zeros_like(d_vec, dtype=bool),
        recipe=f"theoretical(x={x}, mu={mu}, eps={eps}, b={b_choice})",
    )


def practical_weights(system: DesignSystem, gamma: float, horizon: float = None) -> WeightVector:
    """Single-parameter weights sqrt(2 gamma log(T) vhat) + (gamma log(T)/3) bhat."""
    if gamma <= 0:
        raise ValueError("need gamma > 0")
    T = system.horizon if horizon is None else horizon
    if T <= 1.0:
        raise ValueError("need T > 1 so that log T > 0")
    log_t = math.log(T)
    d_vec = np.sqrt(2.0 * gamma * log_t * system.vhat) + (gamma * log_t / 3.0) * system.bhat[None, :]
    return WeightVector(
        d=d_vec,
        excluded=np.zeros_like(d_vec, dtype=bool),
        recipe=f"practical(gamma={gamma})",
    )


def adaptive_weights(prelim: np.ndarray, gamma: float, p: float = 1.0) -> WeightVector:
    """Adaptive-Lasso weights gamma / (2 |prelim|^p); zero prelim pins the column.

    `prelim` is the (n_blocks, B) ordinary-least-squares coefficient array.
    """
    if gamma <= 0:
        raise ValueError("need gamma > 0")
    prelim = np.ascontiguousarray(prelim, dtype=float)
    excluded = prelim == 0.0
    d_vec = np.zeros_like(prelim)
    d_vec[~excluded] = gamma / (2.0 * np.abs(prelim[~excluded]) ** p)
    return WeightVector(d=d_vec, excluded=excluded, recipe=f"adaptive(gamma={gamma}, p={p})")
