"""Monte Carlo validation of the self-normalized martingale tail inequality.

For a counting-process martingale M_t = H . (N - Lambda)_t with |H| <= B, the
probability that M_tau exceeds sqrt(2 (1+eps) Vhat x) + B x / 3 while the
self-normalizer Vhat stays inside a bracket [w, v] is at most
2 (log(v/w)/log(1+eps) + 1) e^{-x}. The lab simulates configurable setups,
counts violations, and compares against both the bound and (for constant
integrands on Poisson processes) the exact probability by pmf enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import poisson as _poisson

from . import point_process as pp

__all__ = [
    "BadMu",
    "BadBracket",
    "exp_remainder",
    "vhat_mu",
    "tail_bound",
    "wilson_interval",
    "MartingaleTrial",
    "TrialSetup",
    "TrialReport",
    "run_trials",
    "exact_poisson_probability",
    "save_report",
]


class BadMu(ValueError):
    """mu must satisfy 0 < mu and mu > exp(mu) - mu - 1."""


class BadBracket(ValueError):
    """The bracket needs v > w > 0."""


def exp_remainder(u: float) -> float:
    """exp(u) - u - 1, the remainder controlling the exponential martingale."""
    return math.expm1(u) - u


def _check_mu(mu: float) -> float:
    """Return mu - exp_remainder(mu), raising if nonpositive."""
    if not (0.0 < mu < 3.0):
        raise BadMu(f"mu={mu} outside (0, 3)")
    gap = mu - exp_remainder(mu)
    if gap <= 0.0:
        raise BadMu(f"mu={mu} fails mu > exp(mu) - mu - 1")
    return gap


def vhat_mu(quad_var: float, bound: float, x: float, mu: float) -> float:
    """Self-normalizer: mu/(mu - phi(mu)) * H^2.N_tau + B^2 x / (mu - phi(mu))."""
    gap = _check_mu(mu)
    return (mu / gap) * quad_var + bound**2 * x / gap


def tail_bound(v: float, w: float, eps: float, x: float) -> float:
    """Peeling bound 2 (log(v/w)/log(1+eps) + 1) e^{-x} for the bracketed event."""
    if not (v > w > 0):
        raise BadBracket(f"need v > w > 0, got v={v}, w={w}")
    if eps <= 0 or x <= 0:
        raise ValueError("need eps > 0 and x > 0")
    return 2.0 * (math.log(v / w) / math.log1p(eps) + 1.0) * math.exp(-x)


def wilson_interval(hits: int, n: int, z: float = 1.96) -> tuple:
    """Wilson 95% score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need n > 0")
    p = hits / n
    denom = 1.0 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return center - half, center + half


@dataclass(frozen=True)
class MartingaleTrial:
    """Summary of one simulated trajectory."""

    m_tau: float
    vhat_mu: float
    quad_char: float
    quad_var: float
    sup_h: float
    tau: float


@dataclass(frozen=True)
class TrialSetup:
    """One Monte Carlo configuration of the lab.

    process    -- "poisson" (i.i.d. homogeneous marks) or "hawkes"
    integrand  -- "const" (H = const_value), "alternating" (+-1 on unit
                  intervals), or "past_count" (H_t = min(1, N[t-1,t)/bound))
    w, v       -- Vhat bracket; None picks w = B^2 x / (mu - phi(mu)) and v as
                  the 99.9th pilot percentile of Vhat
    """

    name: str
    tau: float
    x: float
    eps: float
    mu: float
    process: str = "poisson"
    rate: float = 1.0
    n_marks: int = 1
    model: object = None
    warmup: float = 1.0
    integrand: str = "const"
    const_value: float = 1.0
    bound: float = 1.0
    w: float = None
    v: float = None
    pilot_trials: int = 2000


@dataclass(frozen=True)
class TrialReport:
    """Empirical violation frequency of one event type versus its bound."""

    setup: str
    event: str
    x: float
    eps: float
    mu: float
    w: float
    v: float
    n_trials: int
    n_hits: int
    frequency: float
    wilson_lo: float
    wilson_hi: float
    bound: float
    exact_probability: float = None


def _simulate_summaries(setup: TrialSetup, n: int, rng: np.random.Generator) -> list:
    """Per-trial MartingaleTrial summaries; exact compensators throughout."""
    if setup.process == "poisson" and setup.integrand == "const":
        return _poisson_const(setup, n, rng)
    if setup.process == "poisson" and setup.integrand == "alternating":
        return _poisson_alternating(setup, n, rng)
    if setup.process == "poisson" and setup.integrand == "past_count":
        return [_poisson_past_count(setup, rng) for _ in range(n)]
    if setup.process == "hawkes" and setup.integrand == "const":
        return [_hawkes_const(setup, rng) for _ in range(n)]
    raise NotImplementedError(
        f"unsupported process/integrand pair: {setup.process}/{setup.integrand}"
    )


def _poisson_const(setup, n, rng) -> list:
    lam_tot = setup.rate * setup.tau * setup.n_marks
    h = setup.const_value
    counts = rng.poisson(lam_tot, size=n)
    out = []
    for c in counts:
        quad_var = h * h * c
        out.append(
            MartingaleTrial(
                m_tau=h * (c - lam_tot),
                vhat_mu=vhat_mu(quad_var, setup.bound, setup.x, setup.mu),
                quad_char=h * h * lam_tot,
                quad_var=quad_var,
                sup_h=abs(h),
                tau=setup.tau,
            )
        )
    return out


def _poisson_alternating(setup, n, rng) -> list:
    # H_t = +1 on [2i, 2i+1), -1 on [2i+1, 2i+2), identical across marks
    tau = setup.tau
    plus_len = sum(min(1.0, max(0.0, tau - 2 * i)) for i in range(int(math.ceil(tau / 2))))
    minus_len = tau - plus_len
    lam_plus = setup.rate * setup.n_marks * plus_len
    lam_minus = setup.rate * setup.n_marks * minus_len
    n_plus = rng.poisson(lam_plus, size=n)
    n_minus = rng.poisson(lam_minus, size=n)
    out = []
    for a, b in zip(n_plus, n_minus):
        quad_var = float(a + b)
        out.append(
            MartingaleTrial(
                m_tau=(a - lam_plus) - (b - lam_minus),
                vhat_mu=vhat_mu(quad_var, setup.bound, setup.x, setup.mu),
                quad_char=lam_plus + lam_minus,
                quad_var=quad_var,
                sup_h=1.0,
                tau=tau,
            )
        )
    return out


def _poisson_past_count(setup, rng) -> MartingaleTrial:
    # one homogeneous trajectory per mark; H^(m)_t = min(1, N^(m)[t-1, t) / bound)
    tau, rate, bound = setup.tau, setup.rate, setup.bound
    m_tau = 0.0
    quad_var = 0.0
    quad_char = 0.0
    sup_h = 0.0
    for _ in range(setup.n_marks):
        n_events = rng.poisson(rate * tau)
        times = np.sort(rng.uniform(0.0, tau, size=n_events))
        # breakpoints where the trailing-window count changes
        breaks = np.unique(np.concatenate(([0.0], times, times + 1.0, [tau])))
        breaks = breaks[(breaks >= 0.0) & (breaks <= tau)]
        if breaks[-1] < tau:
            breaks = np.append(breaks, tau)
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            if hi <= lo:
                continue
            mid = 0.5 * (lo + hi)
            c = np.searchsorted(times, mid, side="left") - np.searchsorted(
                times, mid - 1.0, side="left"
            )
            h_val = min(1.0, c / bound)
            quad_char += rate * h_val * h_val * (hi - lo)
            m_tau -= rate * h_val * (hi - lo)
            sup_h = max(sup_h, h_val)
        for t in times:
            c = np.searchsorted(times, t, side="left") - np.searchsorted(
                times, t - 1.0, side="left"
            )
            h_val = min(1.0, c / bound)
            m_tau += h_val
            quad_var += h_val * h_val
            sup_h = max(sup_h, h_val)
    return MartingaleTrial(
        m_tau=m_tau,
        vhat_mu=vhat_mu(quad_var, setup.bound, setup.x, setup.mu),
        quad_char=quad_char,
        quad_var=quad_var,
        sup_h=sup_h,
        tau=tau,
    )


def _hawkes_const(setup, rng) -> MartingaleTrial:
    model = setup.model
    h = setup.const_value
    tau = setup.tau
    points = pp.simulate_thinning(model, setup.warmup, tau, rng)
    n_tot = 0
    comp = 0.0
    for m in range(model.n_marks):
        t_m = points.times[m]
        n_tot += int(np.count_nonzero((t_m > 0.0) & (t_m <= tau)))
        comp += model.nu[m] * tau
        for l in range(model.n_marks):
            kernel = model.kernels[l][m]
            if kernel.is_zero():
                continue
            for u in points.times[l]:
                if u >= tau:
                    break
                comp += kernel.integral_on(max(0.0, -u), tau - u)
    quad_var = h * h * n_tot
    return MartingaleTrial(
        m_tau=h * (n_tot - comp),
        vhat_mu=vhat_mu(quad_var, setup.bound, setup.x, setup.mu),
        quad_char=h * h * comp,
        quad_var=quad_var,
        sup_h=abs(h),
        tau=tau,
    )


def _resolve_bracket(setup: TrialSetup, rng: np.random.Generator) -> TrialSetup:
    """Fill in the default (w, v) bracket, running a pilot when v is absent."""
    w, v = setup.w, setup.v
    if w is None:
        gap = _check_mu(setup.mu)
        w = setup.bound**2 * setup.x / gap
    if v is None:
        pilot = _simulate_summaries(setup, setup.pilot_trials, rng)
        v = float(np.percentile([t.vhat_mu for t in pilot], 99.9))
        v = max(v, w * (1.0 + 1e-9))
    if not v > w > 0:
        raise BadBracket(f"resolved bracket invalid: w={w}, v={v}")
    return replace(setup, w=w, v=v)


def _threshold(value: float, setup: TrialSetup) -> float:
    return math.sqrt(2.0 * (1.0 + setup.eps) * value * setup.x) + setup.bound * setup.x / 3.0


def run_trials(setup: TrialSetup, n_trials: int, rng: np.random.Generator) -> list:
    """Simulate, count tail-event violations, and report against the bounds.

    Returns one report for the observable event (self-normalizer from the
    quadratic variation) and one for the quadratic-characteristic event, which
    peels once instead of twice and therefore carries half the bound.
    """
    setup = _resolve_bracket(setup, rng)
    trials = _simulate_summaries(setup, n_trials, rng)
    obs_hits = 0
    char_hits = 0
    for t in trials:
        if t.sup_h > setup.bound:
            continue
        if t.m_tau >= _threshold(t.vhat_mu, setup) and setup.w <= t.vhat_mu <= setup.v:
            obs_hits += 1
        if t.m_tau >= _threshold(t.quad_char, setup) and setup.w <= t.quad_char <= setup.v:
            char_hits += 1
    bound = tail_bound(setup.v, setup.w, setup.eps, setup.x)
    exact_obs = exact_char = None
    if setup.process == "poisson" and setup.integrand == "const":
        exact_obs, exact_char = exact_poisson_probability(setup)
    reports = []
    for event, hits, bnd, exact in (
        ("observable", obs_hits, bound, exact_obs),
        ("quad-char", char_hits, bound / 2.0, exact_char),
    ):
        lo, hi = wilson_interval(hits, n_trials)
        reports.append(
            TrialReport(
                setup=setup.name,
                event=event,
                x=setup.x,
                eps=setup.eps,
                mu=setup.mu,
                w=setup.w,
                v=setup.v,
                n_trials=n_trials,
                n_hits=hits,
                frequency=hits / n_trials,
                wilson_lo=lo,
                wilson_hi=hi,
                bound=bnd,
                exact_probability=exact,
            )
        )
    return reports


def exact_poisson_probability(setup: TrialSetup) -> tuple:
    """Exact event probabilities by Poisson pmf enumeration (constant integrand).

    The sharp oracle for the lab: both events depend on the trajectory only
    through the total count.
    """
    if setup.process != "poisson" or setup.integrand != "const":
        raise ValueError("enumeration is available only for constant-H Poisson setups")
    if setup.w is None or setup.v is None:
        raise ValueError("bracket must be resolved before enumeration")
    h = setup.const_value
    if abs(h) > setup.bound:
        return 0.0, 0.0
    lam_tot = setup.rate * setup.tau * setup.n_marks
    n_max = int(lam_tot + 40.0 * math.sqrt(max(lam_tot, 1.0)) + 200)
    n = np.arange(n_max + 1)
    pmf = _poisson.pmf(n, lam_tot)
    m_tau = h * (n - lam_tot)
    quad_var = h * h * n
    gap = _check_mu(setup.mu)
    vhat = (setup.mu / gap) * quad_var + setup.bound**2 * setup.x / gap
    thr_obs = np.sqrt(2.0 * (1.0 + setup.eps) * vhat * setup.x) + setup.bound * setup.x / 3.0
    obs = (m_tau >= thr_obs) & (setup.w <= vhat) & (vhat <= setup.v)
    p_obs = float(pmf[obs].sum())
    quad_char = h * h * lam_tot
    if setup.w <= quad_char <= setup.v and abs(h) <= setup.bound:
        thr = _threshold(quad_char, setup)
        p_char = float(pmf[m_tau >= thr].sum())
    else:
        p_char = 0.0
    return p_obs, p_char


def save_report(reports, path) -> None:
    cols = (
        "setup,event,x,eps,mu,w,v,n_trials,n_hits,frequency,"
        "wilson_lo,wilson_hi,bound,exact_probability"
    )
    with open(path, "w", newline="") as fh:
        fh.write(cols + "\n")
        for r in reports:
            exact = "" if r.exact_probability is None else repr(r.exact_probability)
            fh.write(
                f"{r.setup},{r.event},{r.x!r},{r.eps!r},{r.mu!r},{r.w!r},{r.v!r},"
                f"{r.n_trials},{r.n_hits},{r.frequency!r},{r.wilson_lo!r},"
                f"{r.wilson_hi!r},{r.bound!r},{exact}\n"
            )
