"""Marked point data, linear Hawkes models, branching analysis and thinning simulation.

Marks are 0-based integers everywhere in the in-memory API; the CSV format
(`save_points` / `load_points`) uses 1-based marks.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MarkedPointSet",
    "Kernel",
    "ZeroKernel",
    "StepKernel",
    "TruncExpKernel",
    "TruncGaussKernel",
    "HawkesModel",
    "NotSubcritical",
    "ExplodingProcess",
    "kernel_integral",
    "branching_matrix",
    "spectral_radius",
    "stationary_rates",
    "intensity",
    "simulate_thinning",
    "save_points",
    "load_points",
]


class NotSubcritical(ValueError):
    """The branching matrix has spectral radius >= 1: no stationary regime."""


class ExplodingProcess(RuntimeError):
    """Thinning produced more points than the configured cap."""


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# interaction kernels


class Kernel:
    """Influence function with bounded support (0, A]; evaluates to 0 outside.

    Subclasses provide closed-form integrals so that branching matrices, truth
    projections and L2 errors never rely on quadrature.
    """

    support: float

    def __call__(self, x):
        raise NotImplementedError

    def integral_on(self, lo: float, hi: float) -> float:
        """Exact integral of the kernel over (lo, hi) intersected with (0, A]."""
        raise NotImplementedError

    def squared_integral_on(self, lo: float, hi: float) -> float:
        """Exact integral of the squared kernel over (lo, hi) ∩ (0, A]."""
        raise NotImplementedError

    def integral(self) -> float:
        return self.integral_on(0.0, self.support)

    def squared_integral(self) -> float:
        return self.squared_integral_on(0.0, self.support)

    def sup(self) -> float:
        """Least upper bound of the kernel over (0, A] (used as thinning bound)."""
        raise NotImplementedError

    def sum_over(self, dts) -> float:
        """Sum of kernel values over an iterable of lags (hot path of thinning)."""
        return float(np.sum(self.__call__(np.asarray(dts, dtype=float))))

    def is_nonnegative(self) -> bool:
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False

    def is_bin_aligned(self, delta: float) -> bool:
        """True when the kernel is a step function whose edges sit on the k*delta grid."""
        return False


class ZeroKernel(Kernel):
    def __init__(self, support: float = 1.0):
        if support <= 0:
            raise ValueError("support must be positive")
        self.support = float(support)

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def integral_on(self, lo, hi):
        return 0.0

    def squared_integral_on(self, lo, hi):
        return 0.0

    def sup(self):
        return 0.0

    def sum_over(self, dts):
        return 0.0

    def is_nonnegative(self):
        return True

    def is_zero(self):
        return True

    def is_bin_aligned(self, delta):
        return True

    def __repr__(self):
        return f"ZeroKernel(support={self.support})"


class StepKernel(Kernel):
    """Piecewise-constant kernel: value levels[i] on (edges[i], edges[i+1]], 0 elsewhere."""

    def __init__(self, edges, levels, support: float | None = None):
        edges = np.asarray(edges, dtype=float)
        levels = np.asarray(levels, dtype=float)
        if edges.ndim != 1 or levels.ndim != 1 or len(edges) != len(levels) + 1:
            raise ValueError("need len(edges) == len(levels) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if edges[0] < 0:
            raise ValueError("edges must lie in [0, support]")
        self.support = float(support) if support is not None else float(edges[-1])
        if edges[-1] > self.support + 1e-12:
            raise ValueError("edges exceed the support bound")
        self.edges = edges
        self.levels = levels
        self._edges_list = edges.tolist()
        self._levels_list = levels.tolist()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="left") - 1
        inside = (idx >= 0) & (idx < len(self.levels)) & (x > self.edges[0]) & (x <= self.edges[-1])
        out = np.zeros_like(x)
        out[inside] = self.levels[np.clip(idx[inside], 0, len(self.levels) - 1)]
        return out

    def integral_on(self, lo, hi):
        lo = max(lo, 0.0)
        hi = min(hi, self.support)
        if hi <= lo:
            return 0.0
        total = 0.0
        for i, level in enumerate(self._levels_list):
            seg = min(hi, self._edges_list[i + 1]) - max(lo, self._edges_list[i])
            if seg > 0:
                total += level * seg
        return total

    def squared_integral_on(self, lo, hi):
        lo = max(lo, 0.0)
        hi = min(hi, self.support)
        if hi <= lo:
            return 0.0
        total = 0.0
        for i, level in enumerate(self._levels_list):
            seg = min(hi, self._edges_list[i + 1]) - max(lo, self._edges_list[i])
            if seg > 0:
                total += level * level * seg
        return total

    def sup(self):
        return float(np.max(self.levels)) if len(self.levels) else 0.0

    def sum_over(self, dts):
        edges = self._edges_list
        levels = self._levels_list
        n = len(levels)
        total = 0.0
        for x in dts:
            for i in range(n):
                if edges[i] < x <= edges[i + 1]:
                    total += levels[i]
                    break
        return total

    def is_nonnegative(self):
        return bool(np.all(self.levels >= 0))

    def is_zero(self):
        return bool(np.all(self.levels == 0))

    def is_bin_aligned(self, delta):
        ratios = self.edges / delta
        return bool(np.all(np.abs(ratios - np.round(ratios)) < 1e-9))

    def __repr__(self):
        return f"StepKernel(edges={self.edges.tolist()}, levels={self.levels.tolist()}, support={self.support})"


class TruncExpKernel(Kernel):
    """h(x) = amplitude * exp(-rate * x) on (0, support]."""

    def __init__(self, amplitude: float, rate: float, support: float):
        if support <= 0:
            raise ValueError("support must be positive")
        self.amplitude = float(amplitude)
        self.rate = float(rate)
        self.support = float(support)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.amplitude * np.exp(-self.rate * x)
        out[(x <= 0) | (x > self.support)] = 0.0
        return out

    def integral_on(self, lo, hi):
        lo = max(lo, 0.0)
        hi = min(hi, self.support)
        if hi <= lo:
            return 0.0
        if self.rate == 0.0:
            return self.amplitude * (hi - lo)
        return (self.amplitude / self.rate) * (math.exp(-self.rate * lo) - math.exp(-self.rate * hi))

    def squared_integral_on(self, lo, hi):
        lo = max(lo, 0.0)
        hi = min(hi, self.support)
        if hi <= lo:
            return 0.0
        if self.rate == 0.0:
            return self.amplitude**2 * (hi - lo)
        r2 = 2.0 * self.rate
        return (self.amplitude**2 / r2) * (math.exp(-r2 * lo) - math.exp(-r2 * hi))

    def sup(self):
        return abs(self.amplitude) * max(1.0, math.exp(-self.rate * self.support))

    def sum_over(self, dts):
        a, r, s = self.amplitude, self.rate, self.support
        total = 0.0
        for x in dts:
            if 0.0 < x <= s:
                total += a * math.exp(-r * x)
        return total

    def is_nonnegative(self):
        return self.amplitude >= 0

    def is_zero(self):
        return self.amplitude == 0

    def __repr__(self):
        return f"TruncExpKernel(amplitude={self.amplitude}, rate={self.rate}, support={self.support})"


class TruncGaussKernel(Kernel):
    """h(x) = scale * exp(-(x - center)^2 / (2 sd^2)) on (0, support]."""

    def __init__(self, scale: float, center: float, sd: float, support: float):
        if support <= 0 or sd <= 0:
            raise ValueError("support and sd must be positive")
        self.scale = float(scale)
        self.center = float(center)
        self.sd = float(sd)
        self.support = float(support)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.scale * np.exp(-((x - self.center) ** 2) / (2.0 * self.sd**2))
        out[(x <= 0) | (x > self.support)] = 0.0
        return out

    def integral_on(self, lo, hi):
        lo = max(lo, 0.0)
        hi = min(hi, self.support)
        if hi <= lo:
            return 0.0
        s = self.sd
        return self.scale * s * math.sqrt(2.0 * math.pi) * (
            _norm_cdf((hi - self.center) / s) - _norm_cdf((lo - self.center) / s)
        )

    def squared_integral_on(self, lo, hi):
        lo = max(lo, 0.0)
        hi = min(hi, self.support)
        if hi <= lo:
            return 0.0
        # squared kernel is a Gaussian bump with sd / sqrt(2)
        s = self.sd / math.sqrt(2.0)
        return self.scale**2 * s * math.sqrt(2.0 * math.pi) * (
            _norm_cdf((hi - self.center) / s) - _norm_cdf((lo - self.center) / s)
        )

    def sup(self):
        c = abs(self.scale)
        if 0.0 <= self.center <= self.support:
            return c
        edge = 0.0 if self.center < 0 else self.support
        return c * math.exp(-((edge - self.center) ** 2) / (2.0 * self.sd**2))

    def sum_over(self, dts):
        c, m, s2, sup_ = self.scale, self.center, 2.0 * self.sd**2, self.support
        total = 0.0
        for x in dts:
            if 0.0 < x <= sup_:
                total += c * math.exp(-((x - m) ** 2) / s2)
        return total

    def is_nonnegative(self):
        return self.scale >= 0

    def is_zero(self):
        return self.scale == 0

    def __repr__(self):
        return (
            f"TruncGaussKernel(scale={self.scale}, center={self.center}, "
            f"sd={self.sd}, support={self.support})"
        )


def kernel_integral(kernel: Kernel) -> float:
    """Exact integral of a kernel over its support (branching-matrix entry)."""
    return kernel.integral()


# ---------------------------------------------------------------------------
# data model


@dataclass(frozen=True)
class MarkedPointSet:
    """Sorted event times per mark on an observation window.

    times[m] is a strictly increasing float array; window = (t_start, t_end)
    contains every time.
    """

    times: tuple
    window: tuple

    def __post_init__(self):
        times = tuple(np.ascontiguousarray(t, dtype=float) for t in self.times)
        if len(times) < 1:
            raise ValueError("need at least one mark")
        lo, hi = float(self.window[0]), float(self.window[1])
        if not lo < hi:
            raise ValueError("window must be a nonempty interval")
        for t in times:
            if t.ndim != 1:
                raise ValueError("times must be 1-d arrays")
            if len(t) and (t[0] < lo or t[-1] > hi):
                raise ValueError("event times must lie inside the window")
            if np.any(np.diff(t) <= 0):
                raise ValueError("times must be strictly increasing per mark")
            t.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "window", (lo, hi))

    @property
    def n_marks(self) -> int:
        return len(self.times)

    def count_in(self, mark: int, lo: float, hi: float) -> int:
        """Number of events of `mark` with time in (lo, hi]."""
        t = self.times[mark]
        return int(np.searchsorted(t, hi, side="right") - np.searchsorted(t, lo, side="right"))


@dataclass(frozen=True)
class HawkesModel:
    """Spontaneous rates plus an M x M grid of interaction kernels.

    kernels[l][m] is the influence of past events of mark l on the intensity
    of mark m; all kernels share the common support bound `support`.
    """

    nu: np.ndarray
    kernels: tuple
    support: float

    def __post_init__(self):
        nu = np.ascontiguousarray(self.nu, dtype=float)
        if nu.ndim != 1 or len(nu) < 1:
            raise ValueError("nu must be a nonempty vector")
        if np.any(nu < 0):
            raise ValueError("spontaneous rates must be nonnegative")
        M = len(nu)
        kernels = tuple(tuple(row) for row in self.kernels)
        if len(kernels) != M or any(len(row) != M for row in kernels):
            raise ValueError("kernels must form an M x M grid")
        for row in kernels:
            for k in row:
                if not isinstance(k, Kernel):
                    raise TypeError("kernel grid entries must be Kernel instances")
                if not k.is_nonnegative():
                    raise ValueError("linear Hawkes models need nonnegative kernels")
                if k.support > self.support + 1e-12:
                    raise ValueError("kernel support exceeds the common bound")
        nu.flags.writeable = False
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "support", float(self.support))

    @property
    def n_marks(self) -> int:
        return len(self.nu)


def branching_matrix(model: HawkesModel) -> np.ndarray:
    """Matrix of kernel masses; entry (l, m) integrates the kernel from l to m."""
    M = model.n_marks
    gamma = np.empty((M, M))
    for l in range(M):
        for m in range(M):
            gamma[l, m] = model.kernels[l][m].integral()
    return gamma


def spectral_radius(gamma: np.ndarray, tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Largest eigenvalue modulus of a nonnegative matrix.

    Power iteration with a dense-eigensolver fallback: reducible matrices can
    starve the iteration (zero-vector stagnation) or leave the norm ratio
    oscillating among equal-modulus eigenvalues.
    """
    g = np.ascontiguousarray(gamma, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("need a square matrix")
    n = g.shape[0]
    if not np.any(g):
        return 0.0
    v = np.full(n, 1.0 / math.sqrt(n))
    lam_prev = -1.0
    for _ in range(max_iter):
        w = g @ v
        lam = float(np.linalg.norm(w))
        if lam <= 1e-300:
            return _dense_radius(g)
        v = w / lam
        if abs(lam - lam_prev) <= tol * max(1.0, lam):
            if np.max(np.abs(g @ v - lam * v)) <= 1e-8 * max(1.0, lam):
                return lam
        lam_prev = lam
    return _dense_radius(g)


def _dense_radius(g: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(g))))


def stationary_rates(model: HawkesModel) -> np.ndarray:
    """First-moment rates at stationarity: solve m = nu + Gamma' m."""
    gamma = branching_matrix(model)
    rho = spectral_radius(gamma)
    if rho >= 1.0:
        raise NotSubcritical(f"spectral radius {rho:.6f} >= 1")
    M = model.n_marks
    return np.linalg.solve(np.eye(M) - gamma.T, model.nu)


def intensity(model: HawkesModel, history: MarkedPointSet, t: float, mark: int) -> float:
    """Conditional intensity of `mark` at time t given the strict past.

    Events at exactly t contribute nothing (the filter integrates up to t-).
    """
    A = model.support
    lam = float(model.nu[mark])
    for l in range(model.n_marks):
        kernel = model.kernels[l][mark]
        if kernel.is_zero():
            continue
        times = history.times[l]
        lo = np.searchsorted(times, t - A, side="left")
        hi = np.searchsorted(times, t, side="left")
        if hi > lo:
            lam += kernel.sum_over(t - times[lo:hi])
    return lam


def simulate_thinning(
    model: HawkesModel,
    warmup: float,
    horizon: float,
    rng: np.random.Generator,
    point_cap: int = 10_000_000,
    check_bound: bool = False,
) -> MarkedPointSet:
    """Simulate the model on [-warmup, horizon] by thinning, from an empty past.

    The dominating rate for mark m is nu_m plus sup-of-kernel times the number
    of source points currently inside the interaction window; it is recomputed
    after every candidate because points leaving the window shrink the bound.
    Deterministic given the generator state.
    """
    if warmup < 0 or horizon <= -warmup:
        raise ValueError("need warmup >= 0 and horizon > -warmup")
    A = model.support
    M = model.n_marks
    rho = spectral_radius(branching_matrix(model))
    if rho >= 1.0:
        warnings.warn(
            f"branching spectral radius {rho:.4f} >= 1; the simulation may explode",
            RuntimeWarning,
        )
    sup_lm = np.array([[k.sup() for k in row] for row in model.kernels])  # (source, target)
    active = [
        (l, m, model.kernels[l][m])
        for l in range(M)
        for m in range(M)
        if not model.kernels[l][m].is_zero()
    ]
    by_source: list = [[] for _ in range(M)]
    for l, m, ker in active:
        by_source[l].append((m, ker))

    nu = model.nu
    times: list = [[] for _ in range(M)]
    counts = np.zeros(M)
    lam = np.empty(M)
    t = -float(warmup)
    n_total = 0
    while True:
        for l in range(M):
            tl = times[l]
            counts[l] = len(tl) - bisect.bisect_left(tl, t - A)
        lam_bar = nu + counts @ sup_lm
        total_bar = float(lam_bar.sum())
        if total_bar <= 0.0:
            break
        t += rng.exponential(1.0 / total_bar)
        if t > horizon:
            break
        lam[:] = nu
        for l in range(M):
            targets = by_source[l]
            if not targets:
                continue
            tl = times[l]
            lo = bisect.bisect_left(tl, t - A)
            if lo == len(tl):
                continue
            dts = [t - u for u in tl[lo:]]
            for m, ker in targets:
                lam[m] += ker.sum_over(dts)
        total_lam = float(lam.sum())
        if check_bound and total_lam > total_bar * (1.0 + 1e-9):
            raise AssertionError("dominating rate fell below the true intensity")
        u = rng.uniform() * total_bar
        if u < total_lam:
            acc = 0.0
            mark = M - 1
            for m in range(M):
                acc += lam[m]
                if u < acc:
                    mark = m
                    break
            times[mark].append(t)
            n_total += 1
            if n_total > point_cap:
                raise ExplodingProcess(f"more than {point_cap} points generated")
    return MarkedPointSet(
        times=tuple(np.asarray(tl, dtype=float) for tl in times),
        window=(-float(warmup), float(horizon)),
    )


# ---------------------------------------------------------------------------
# CSV serialization (1-based marks, full-precision times)


def save_points(points: MarkedPointSet, path) -> None:
    lo, hi = points.window
    rows = []
    for m, t in enumerate(points.times):
        for x in t:
            rows.append((x, m + 1))
    rows.sort()
    with open(path, "w", newline="") as fh:
        fh.write(f"# window_start={lo!r} window_end={hi!r}\n")
        fh.write("mark,time\n")
        for x, m in rows:
            fh.write(f"{m},{x!r}\n")


def load_points(path) -> MarkedPointSet:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# window_start="):
            raise ValueError("missing window header comment")
        parts = dict(p.split("=") for p in header[2:].split())
        lo = float(parts["window_start"])
        hi = float(parts["window_end"])
        names = fh.readline().strip()
        if names != "mark,time":
            raise ValueError("unexpected column header")
        per_mark: dict = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            m_str, t_str = line.split(",")
            per_mark.setdefault(int(m_str), []).append(float(t_str))
    n_marks = max(per_mark) if per_mark else 1
    times = tuple(np.sort(np.asarray(per_mark.get(m + 1, []), dtype=float)) for m in range(n_marks))
    return MarkedPointSet(times=times, window=(lo, hi))
