"""Histogram dictionary on (0, A], coefficient indexing, predictors and reconstruction.

The candidate functions are indexed by columns: one spontaneous-rate column per
target mark, and one column per (target, source, bin) triple. Block m of a
coefficient vector covers target mark m and is laid out as
[spont, (source 0, bins 0..K-1), (source 1, bins 0..K-1), ...].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .point_process import HawkesModel, Kernel, MarkedPointSet, StepKernel

__all__ = [
    "HistogramDictionary",
    "UnitHistogram",
    "Spont",
    "Inter",
    "CoefficientVector",
    "ReconstructedModel",
    "WindowUnderflow",
    "SupportMismatch",
    "predictor_value",
    "project_truth",
    "reconstruct",
    "save_reconstruction",
]


class WindowUnderflow(ValueError):
    """Evaluation time needs history earlier than the observation window."""


class SupportMismatch(ValueError):
    """Model support and dictionary support differ."""


@dataclass(frozen=True)
class Spont:
    """Column identity: spontaneous rate of target mark m (0-based)."""

    m: int


@dataclass(frozen=True)
class Inter:
    """Column identity: bin `k` (0-based) of the kernel from `source` to target `m`."""

    m: int
    source: int
    k: int


@dataclass(frozen=True)
class HistogramDictionary:
    """Orthonormal histogram family with K bins of width delta = A / K.

    Bin k (0-based) is the scaled indicator delta^{-1/2} on (k*delta, (k+1)*delta].
    """

    n_marks: int
    n_bins: int
    support: float

    def __post_init__(self):
        if self.n_marks < 1 or self.n_bins < 1 or self.support <= 0:
            raise ValueError("need n_marks >= 1, n_bins >= 1, support > 0")

    @property
    def delta(self) -> float:
        return self.support / self.n_bins

    @property
    def block_size(self) -> int:
        return 1 + self.n_marks * self.n_bins

    @property
    def size(self) -> int:
        return self.n_marks * self.block_size

    def bin_edges(self) -> np.ndarray:
        return np.linspace(0.0, self.support, self.n_bins + 1)

    def flat_index(self, col) -> int:
        if isinstance(col, Spont):
            return col.m * self.block_size
        if isinstance(col, Inter):
            return col.m * self.block_size + 1 + col.source * self.n_bins + col.k
        raise TypeError(f"not a column id: {col!r}")

    def column(self, index: int):
        if not 0 <= index < self.size:
            raise IndexError(index)
        m, rest = divmod(index, self.block_size)
        if rest == 0:
            return Spont(m)
        source, k = divmod(rest - 1, self.n_bins)
        return Inter(m, source, k)

    def basis_value(self, k: int, x) -> np.ndarray:
        """Evaluate bin k of the histogram family at x."""
        x = np.asarray(x, dtype=float)
        d = self.delta
        return np.where((x > k * d) & (x <= (k + 1) * d), d**-0.5, 0.0)


@dataclass(frozen=True)
class UnitHistogram:
    """Orthonormal histogram on (0, 1] (degenerate-pipeline dictionary)."""

    n_bins: int

    @property
    def delta(self) -> float:
        return 1.0 / self.n_bins

    def bin_edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_bins + 1)


@dataclass
class CoefficientVector:
    """Coefficients of a candidate function in the histogram dictionary."""

    dictionary: HistogramDictionary
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != (self.dictionary.size,):
            raise ValueError(
                f"expected {self.dictionary.size} coefficients, got {values.shape}"
            )
        self.values = values

    def spont(self) -> np.ndarray:
        """Spontaneous-rate entries, one per target mark."""
        d = self.dictionary
        return self.values.reshape(d.n_marks, d.block_size)[:, 0].copy()

    def inter(self) -> np.ndarray:
        """Interaction entries with shape (target, source, bin)."""
        d = self.dictionary
        return (
            self.values.reshape(d.n_marks, d.block_size)[:, 1:]
            .reshape(d.n_marks, d.n_marks, d.n_bins)
            .copy()
        )

    def blocks(self) -> np.ndarray:
        return self.values.reshape(self.dictionary.n_marks, self.dictionary.block_size)

    @classmethod
    def from_parts(cls, dictionary, spont, inter) -> "CoefficientVector":
        M, K, B = dictionary.n_marks, dictionary.n_bins, dictionary.block_size
        values = np.zeros((M, B))
        values[:, 0] = spont
        values[:, 1:] = np.asarray(inter, dtype=float).reshape(M, M * K)
        return cls(dictionary, values.reshape(-1))


def predictor_value(
    dictionary: HistogramDictionary,
    points: MarkedPointSet,
    col,
    t: float,
    m_eval: int,
) -> float:
    """Value at time t of the predictor process of one column, for mark m_eval.

    A spontaneous column evaluates to 1 on its own target; an interaction
    column counts source events with lag inside its bin, scaled by
    delta^{-1/2}. The event at u = t itself never counts (lag 0 is outside
    every bin).
    """
    if t - dictionary.support < points.window[0]:
        raise WindowUnderflow(
            f"evaluating at t={t} needs history back to {t - dictionary.support}"
        )
    if isinstance(col, Spont):
        return 1.0 if m_eval == col.m else 0.0
    if isinstance(col, Inter):
        if m_eval != col.m:
            return 0.0
        d = dictionary.delta
        # lag in (k*delta, (k+1)*delta]  <=>  u in [t-(k+1)*delta, t-k*delta)
        lo = t - (col.k + 1) * d
        hi = t - col.k * d
        times = points.times[col.source]
        n = int(
            np.searchsorted(times, hi, side="left") - np.searchsorted(times, lo, side="left")
        )
        return n * d**-0.5
    raise TypeError(f"not a column id: {col!r}")


def project_truth(dictionary: HistogramDictionary, model) -> CoefficientVector:
    """L2 projection of a model onto the dictionary, via closed-form bin integrals.

    Exact for every kernel alternative, so coefficient-level support metrics
    carry no quadrature error.
    """
    if abs(model.support - dictionary.support) > 1e-12:
        raise SupportMismatch(
            f"model support {model.support} != dictionary support {dictionary.support}"
        )
    M, K = dictionary.n_marks, dictionary.n_bins
    if len(model.nu) != M:
        raise SupportMismatch("mark counts differ")
    d = dictionary.delta
    inter = np.zeros((M, M, K))
    for l in range(M):
        for m in range(M):
            kernel = model.kernels[l][m]
            if kernel.is_zero():
                continue
            for k in range(K):
                inter[m, l, k] = d**-0.5 * kernel.integral_on(k * d, (k + 1) * d)
    return CoefficientVector.from_parts(dictionary, np.asarray(model.nu, dtype=float), inter)


@dataclass(frozen=True)
class ReconstructedModel:
    """Step-function estimate with the shape of a Hawkes model.

    Unlike HawkesModel, levels may be negative: the estimator is not forced to
    be an admissible intensity.
    """

    nu: np.ndarray
    kernels: tuple
    support: float

    @property
    def n_marks(self) -> int:
        return len(self.nu)


def reconstruct(dictionary: HistogramDictionary, coeffs: CoefficientVector) -> ReconstructedModel:
    """Turn a coefficient vector into spontaneous rates plus step kernels."""
    M, K = dictionary.n_marks, dictionary.n_bins
    d = dictionary.delta
    edges = dictionary.bin_edges()
    inter = coeffs.inter()
    kernels = tuple(
        tuple(
            StepKernel(edges, inter[m, l] * d**-0.5, support=dictionary.support)
            for m in range(M)
        )
        for l in range(M)
    )
    return ReconstructedModel(nu=coeffs.spont(), kernels=kernels, support=dictionary.support)


def save_reconstruction(model_like, path) -> None:
    """Write step-function levels as CSV (1-based marks; source 0 = spontaneous row)."""
    M = model_like.n_marks
    support = model_like.support
    with open(path, "w", newline="") as fh:
        fh.write("target,source,bin_lo,bin_hi,level\n")
        for m in range(M):
            fh.write(f"{m + 1},0,,,{float(model_like.nu[m])!r}\n")
        for l in range(M):
            for m in range(M):
                kernel = model_like.kernels[l][m]
                if isinstance(kernel, StepKernel):
                    for i, level in enumerate(kernel.levels):
                        fh.write(
                            f"{m + 1},{l + 1},{kernel.edges[i]!r},{kernel.edges[i + 1]!r},{float(level)!r}\n"
                        )
                elif kernel.is_zero():
                    fh.write(f"{m + 1},{l + 1},{0.0!r},{support!r},{0.0!r}\n")
                else:
                    raise TypeError("only step or zero kernels can be exported")
