"""Exact construction of the observable design: Gram matrix, b vector, column stats.

All predictors are piecewise constant in time, so every integral is a finite
sum over sweep segments; no quadrature enters the production path. The
interaction predictors do not depend on the target mark, hence the Gram matrix
is block diagonal with M identical blocks and only one block is stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dictionary import HistogramDictionary, UnitHistogram
from .point_process import MarkedPointSet

__all__ = [
    "DesignSystem",
    "InsufficientHistory",
    "build_design",
    "build_design_poisson",
    "min_eigenvalue",
    "save_design",
]


class InsufficientHistory(ValueError):
    """Observation window does not cover the history needed on [0, T]."""


@dataclass(frozen=True)
class DesignSystem:
    """Quadratic (G), linear (b) and per-column statistics of the contrast.

    block        -- shared (B, B) Gram block, B = 1 + M*K for Hawkes designs
    b            -- (n_blocks, B) linear part, one row per target mark
    vhat         -- (n_blocks, B) observed quadratic variation per column
    bhat         -- (B,) sup over [0, T] of |psi| per column, shared by blocks
    horizon      -- T
    n_points     -- per-mark event counts on (0, T]
    """

    block: np.ndarray
    b: np.ndarray
    vhat: np.ndarray
    bhat: np.ndarray
    horizon: float
    n_points: np.ndarray
    dictionary: object = None

    @property
    def n_blocks(self) -> int:
        return self.b.shape[0]

    @property
    def block_size(self) -> int:
        return self.b.shape[1]

    @property
    def size(self) -> int:
        return self.b.size


def build_design(
    points: MarkedPointSet, dictionary: HistogramDictionary, horizon: float
) -> DesignSystem:
    """Sweep the piecewise-constant bin counts over [0, T] and accumulate exactly.

    The count of source-l events at lag inside bin k is constant between
    breakpoints {u + k*delta}; segment lengths weight the Gram products, and
    event-time lookups give b and vhat. Requires history on [-A, 0) to seed
    the counts at t = 0.
    """
    A = dictionary.support
    M = dictionary.n_marks
    K = dictionary.n_bins
    delta = dictionary.delta
    T = float(horizon)
    w0, w1 = points.window
    if points.n_marks != M:
        raise ValueError(f"point set has {points.n_marks} marks, dictionary wants {M}")
    if w0 > -A + 1e-12 or w1 < T - 1e-12:
        raise InsufficientHistory(
            f"window [{w0}, {w1}] must cover [-{A}, {T}] to evaluate predictors on [0, T]"
        )
    MK = M * K
    inv_sqrt_delta = delta**-0.5

    # transitions of the MK counting vector inside (0, T), plus its state at 0+
    c0 = np.zeros(MK)
    beta_list = []
    col_list = []
    sign_list = []
    for l in range(M):
        u = points.times[l]
        u = u[(u > -A) & (u < T)]
        if len(u) == 0:
            continue
        for k in range(K):
            col = l * K + k
            on = u + k * delta
            off = u + (k + 1) * delta
            c0[col] += np.count_nonzero((on <= 0.0) & (off > 0.0))
            m_on = (on > 0.0) & (on < T)
            m_off = (off > 0.0) & (off < T)
            beta_list.append(on[m_on])
            col_list.append(np.full(np.count_nonzero(m_on), col, dtype=np.intp))
            sign_list.append(np.ones(np.count_nonzero(m_on)))
            beta_list.append(off[m_off])
            col_list.append(np.full(np.count_nonzero(m_off), col, dtype=np.intp))
            sign_list.append(-np.ones(np.count_nonzero(m_off)))

    if beta_list:
        betas = np.concatenate(beta_list)
        cols = np.concatenate(col_list)
        signs = np.concatenate(sign_list)
        uniq, inverse = np.unique(betas, return_inverse=True)
        deltas = np.zeros((len(uniq), MK))
        np.add.at(deltas, (inverse, cols), signs)
        counts = np.vstack([c0, c0 + np.cumsum(deltas, axis=0)])
        edges = np.concatenate(([0.0], uniq, [T]))
    else:
        counts = c0[None, :]
        edges = np.array([0.0, T])
    seg_len = np.diff(edges)

    gram_inter = (counts.T * seg_len) @ counts / delta
    gram_spont_inter = (counts.T @ seg_len) * inv_sqrt_delta

    B = 1 + MK
    block = np.zeros((B, B))
    block[0, 0] = T
    block[0, 1:] = gram_spont_inter
    block[1:, 0] = gram_spont_inter
    block[1:, 1:] = gram_inter

    b = np.zeros((M, B))
    vhat = np.zeros((M, B))
    n_points = np.zeros(M, dtype=int)
    n_segments = counts.shape[0]
    for m in range(M):
        t_m = points.times[m]
        t_m = t_m[(t_m > 0.0) & (t_m <= T)]
        n_points[m] = len(t_m)
        b[m, 0] = n_points[m]
        vhat[m, 0] = n_points[m]
        if len(t_m):
            seg = np.searchsorted(edges, t_m, side="left") - 1
            seg = np.clip(seg, 0, n_segments - 1)
            rows = counts[seg]
            b[m, 1:] = rows.sum(axis=0) * inv_sqrt_delta
            vhat[m, 1:] = (rows**2).sum(axis=0) / delta

    bhat = np.concatenate(([1.0], counts.max(axis=0) * inv_sqrt_delta))
    return DesignSystem(
        block=block,
        b=b,
        vhat=vhat,
        bhat=bhat,
        horizon=T,
        n_points=n_points,
        dictionary=dictionary,
    )


def build_design_poisson(points: MarkedPointSet, histogram: UnitHistogram) -> DesignSystem:
    """Design for M i.i.d. unit-interval Poisson samples sharing one intensity.

    The predictor of a column is the basis function itself, so the Gram matrix
    is M times the (identity) Gram of the orthonormal histogram.
    """
    K = histogram.n_bins
    M = points.n_marks
    d = histogram.delta
    lo, hi = points.window
    if lo < -1e-12 or hi > 1.0 + 1e-12:
        raise ValueError("poisson samples must live on [0, 1]")
    edges = histogram.bin_edges()
    bin_counts = np.zeros(K)
    n_points = np.zeros(M, dtype=int)
    for m in range(M):
        t = points.times[m]
        n_points[m] = len(t)
        # membership in ((k-1)d, kd]
        hi_idx = np.searchsorted(t, edges[1:], side="right")
        lo_idx = np.searchsorted(t, edges[:-1], side="right")
        bin_counts += hi_idx - lo_idx
    block = M * np.eye(K)
    b = (bin_counts * d**-0.5)[None, :]
    vhat = (bin_counts / d)[None, :]
    bhat = np.full(K, d**-0.5)
    return DesignSystem(
        block=block,
        b=b,
        vhat=vhat,
        bhat=bhat,
        horizon=1.0,
        n_points=n_points,
        dictionary=histogram,
    )


def min_eigenvalue(system: DesignSystem) -> float:
    """Smallest eigenvalue of the (shared) Gram block."""
    return float(np.linalg.eigvalsh(system.block)[0])


def save_design(system: DesignSystem, path) -> None:
    """Debug dump of the Gram block and b rows as dense CSV."""
    B = system.block_size
    with open(path, "w", newline="") as fh:
        fh.write("row,kind," + ",".join(f"c{j}" for j in range(B)) + "\n")
        for i in range(B):
            fh.write(f"{i},G," + ",".join(repr(float(x)) for x in system.block[i]) + "\n")
        for m in range(system.n_blocks):
            fh.write(f"{m},b," + ",".join(repr(float(x)) for x in system.b[m]) + "\n")
