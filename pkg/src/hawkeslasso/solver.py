"""Weighted-Lasso solver (cyclic coordinate descent) plus least-squares refits.

The objective per target block is F(a) = -2 a'b + a'G a + 2 d'|a|; blocks are
independent because the Gram matrix is block diagonal. Coordinate updates use
the closed-form soft threshold, so converged coefficients are exactly zero off
the support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .design import DesignSystem
from .weights import WeightVector

__all__ = [
    "LassoSolution",
    "OlsFit",
    "soft_threshold",
    "lasso_shooting",
    "objective",
    "kkt_residual",
    "ols",
    "ols_refit",
]


def soft_threshold(z: float, d: float) -> float:
    if z > d:
        return z - d
    if z < -d:
        return z + d
    return 0.0


@dataclass
class LassoSolution:
    """coef (n_blocks, B); support mask; pass count; convergence flag; objective."""

    coef: np.ndarray
    support: np.ndarray
    iterations: int
    converged: bool
    objective: float


@dataclass
class OlsFit:
    """coef (n_blocks, B); per-block flag for rank-deficient (min-norm) solves."""

    coef: np.ndarray
    singular: np.ndarray


def lasso_shooting(
    system: DesignSystem,
    weights: WeightVector,
    tol: float = 1e-8,
    max_passes: int = 10000,
    debug: bool = False,
) -> LassoSolution:
    """Cyclic coordinate descent from a = 0, block by block.

    Columns with zero Gram diagonal (never-active predictors) or excluded
    weights stay at zero. A block stops when the largest coordinate move in a
    full pass is at most tol * (1 + max |a|).
    """
    G = system.block
    diag = np.diag(G).copy()
    n_blocks, B = system.b.shape
    if weights.d.shape != (n_blocks, B):
        raise ValueError("weight shape does not match the design")
    coef = np.zeros((n_blocks, B))
    max_pass_count = 0
    all_converged = True
    for blk in range(n_blocks):
        b = system.b[blk]
        d = weights.d[blk]
        idx = np.flatnonzero((~weights.excluded[blk]) & (diag > 0.0))
        a = coef[blk]
        if idx.size == 0:
            continue
        converged = False
        passes = 0
        prev_obj = math.inf
        for passes in range(1, max_passes + 1):
            Ga = G @ a
            max_step = 0.0
            for j in idx:
                z = b[j] - Ga[j] + diag[j] * a[j]
                new = soft_threshold(z, d[j]) / diag[j]
                if new != a[j]:
                    Ga += G[:, j] * (new - a[j])
                    step = abs(new - a[j])
                    if step > max_step:
                        max_step = step
                    a[j] = new
            if debug:
                obj = _block_objective(G, b, d, a, weights.excluded[blk])
                if obj > prev_obj + 1e-9 * (1.0 + abs(prev_obj)):
                    raise AssertionError(
                        f"objective increased within block {blk}: {prev_obj} -> {obj}"
                    )
                prev_obj = obj
            scale = 1.0 + (float(np.max(np.abs(a))) if a.size else 0.0)
            if max_step <= tol * scale:
                converged = True
                break
        max_pass_count = max(max_pass_count, passes)
        all_converged = all_converged and converged
    return LassoSolution(
        coef=coef,
        support=coef != 0.0,
        iterations=max_pass_count,
        converged=all_converged,
        objective=objective(system, weights, coef),
    )


def _block_objective(G, b, d, a, excluded) -> float:
    pen = float(np.sum(d[~excluded] * np.abs(a[~excluded])))
    return float(-2.0 * a @ b + a @ G @ a + 2.0 * pen)


def objective(system: DesignSystem, weights: WeightVector, coef: np.ndarray) -> float:
    """Penalized contrast F(a) = -2 a'b + a'G a + 2 d'|a| summed over blocks."""
    total = 0.0
    for blk in range(system.n_blocks):
        total += _block_objective(
            system.block, system.b[blk], weights.d[blk], coef[blk], weights.excluded[blk]
        )
    return total


def kkt_residual(system: DesignSystem, weights: WeightVector, coef: np.ndarray) -> float:
    """Max violation of the subgradient optimality conditions; 0 at an exact optimum."""
    worst = 0.0
    for blk in range(system.n_blocks):
        a = coef[blk]
        grad = -2.0 * system.b[blk] + 2.0 * (system.block @ a)
        d = weights.d[blk]
        for j in range(len(a)):
            if weights.excluded[blk][j]:
                continue
            if a[j] != 0.0:
                r = abs(grad[j] + 2.0 * d[j] * math.copysign(1.0, a[j]))
            else:
                r = max(0.0, abs(grad[j]) - 2.0 * d[j])
            if r > worst:
                worst = r
    return worst


def _solve_block(G: np.ndarray, b: np.ndarray) -> tuple:
    """Symmetric solve with a minimum-norm least-squares fallback."""
    n = len(b)
    if n == 0:
        return np.zeros(0), False
    try:
        a = scipy.linalg.solve(G, b, assume_a="sym")
        if np.all(np.isfinite(a)) and np.allclose(G @ a, b, rtol=1e-8, atol=1e-8 * (1 + np.abs(b).max())):
            return a, False
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        pass
    a, _, rank, _ = np.linalg.lstsq(G, b, rcond=None)
    return a, rank < n


def ols(system: DesignSystem) -> OlsFit:
    """Unpenalized least squares per block (the preliminary adaptive estimate)."""
    n_blocks, B = system.b.shape
    coef = np.zeros((n_blocks, B))
    singular = np.zeros(n_blocks, dtype=bool)
    for blk in range(n_blocks):
        coef[blk], singular[blk] = _solve_block(system.block, system.b[blk])
    return OlsFit(coef=coef, singular=singular)


def ols_refit(system: DesignSystem, support: np.ndarray) -> OlsFit:
    """Least squares restricted to a support mask; off-support entries stay zero."""
    support = np.asarray(support, dtype=bool)
    n_blocks, B = system.b.shape
    if support.shape != (n_blocks, B):
        raise ValueError("support shape does not match the design")
    coef = np.zeros((n_blocks, B))
    singular = np.zeros(n_blocks, dtype=bool)
    for blk in range(n_blocks):
        sel = np.flatnonzero(support[blk])
        if sel.size == 0:
            continue
        sub = system.block[np.ix_(sel, sel)]
        a, singular[blk] = _solve_block(sub, system.b[blk][sel])
        coef[blk, sel] = a
    return OlsFit(coef=coef, singular=singular)
