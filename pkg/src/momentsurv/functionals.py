"""Posterior functionals built from the moment grid.

Per-time-point approximate posteriors of the survival function, credible
and marginal intervals, the posterior of the median survival time, and
the frequentist baselines (Kaplan-Meier, empirical median).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .jacobi import momentify
from .moments import MomentVector, validate_moments

__all__ = [
    "DEGENERATE_VARIANCE",
    "MedianInterval",
    "EmpiricalMedian",
    "KaplanMeierFit",
    "PosteriorSummary",
    "posterior_at_t",
    "credible_interval",
    "median_survival_cdf",
    "median_survival_estimate",
    "median_interval",
    "marginal_interval",
    "marginal_median_cdf",
    "kaplan_meier",
    "empirical_median",
    "posterior_summary",
]

# below this variance the weight-matching is singular; the posterior is
# treated as a point mass at its mean
DEGENERATE_VARIANCE = 1e-8


def _reconstruct(row, n_sim, seed):
    """Moment reconstruction with graceful truncation.

    Very concentrated posteriors carry less information in float moments
    than a full-order expansion demands; when the reconstruction clips to
    nothing or the envelope degenerates, retry with fewer moments. The
    two-moment case is the matched beta itself and always succeeds.
    """
    last = None
    for n in range(len(row), 1, -1):
        try:
            return momentify(row, n_moments=n, n_sim=n_sim, seed=seed)
        except (ValueError, RuntimeError) as err:
            last = err
    raise RuntimeError(f"moment reconstruction failed at every order: {last}")


def posterior_at_t(row, n_sim=1000, seed=0):
    """Draws from the approximate posterior of the survival function at one t."""
    if not isinstance(row, MomentVector):
        row = MomentVector(tuple(row))
    report = validate_moments(row, tol=1e-9)
    if not report.ok:
        raise ValueError(f"invalid moment row: {[str(v) for v in report]}")
    if row.variance < DEGENERATE_VARIANCE:
        return np.full(n_sim, row.mean)
    return _reconstruct(row, n_sim, seed).psample


def credible_interval(sample, level=0.95):
    """Equal-tailed interval from empirical quantiles."""
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise ValueError("empty sample")
    alpha = 1.0 - level
    lo, hi = np.quantile(sample, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def median_survival_cdf(samples):
    """CDF of the median survival time on the grid: P(S(t_i) <= 1/2 | data).

    Monte-Carlo noise can break monotonicity, so a running maximum is
    applied.
    """
    raw = np.array([np.mean(np.asarray(s) <= 0.5) for s in samples])
    return np.maximum.accumulate(raw)


def median_survival_estimate(c, horizon, q):
    """Mean of the median-survival distribution: (M/(q-1)) * sum_i (1 - c_i)."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("CDF values must lie in [0,1]")
    return float(horizon / (q - 1) * np.sum(1.0 - c))


class MedianInterval(NamedTuple):
    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False


def _invert_cdf(c, t_grid, p):
    """Smallest t with c(t) >= p, linearly interpolated; c(0) = 0 implicitly."""
    c = np.asarray(c, dtype=float)
    idx = int(np.searchsorted(c, p, side="left"))
    if idx >= len(c):
        return float(t_grid[-1]), True
    t_hi, c_hi = t_grid[idx], c[idx]
    t_lo, c_lo = (0.0, 0.0) if idx == 0 else (t_grid[idx - 1], c[idx - 1])
    if c_hi == c_lo:
        return float(t_hi), False
    return float(t_lo + (p - c_lo) / (c_hi - c_lo) * (t_hi - t_lo)), False


def median_interval(c, t_grid, level=0.95):
    """Equal-tailed interval for the median survival time from its gridded CDF."""
    alpha = 1.0 - level
    lo, lo_open = _invert_cdf(c, t_grid, alpha / 2.0)
    hi, hi_open = _invert_cdf(c, t_grid, 1.0 - alpha / 2.0)
    return MedianInterval(lo, hi, lo_open, hi_open)


def marginal_interval(trace, level=0.95):
    """Quantile interval of the Gibbs trace of conditional means at one t."""
    return credible_interval(trace, level)


def marginal_median_cdf(trace_matrix, horizon):
    """Median-survival CDF and estimate from the conditional-mean trace.

    The per-iteration conditional means stand in for posterior draws of
    the survival function; the CDF value at t_i is the fraction of
    iterations with conditional mean <= 1/2 (isotonically corrected).
    """
    tm = np.asarray(trace_matrix, dtype=float)
    q = tm.shape[0]
    cdf = np.maximum.accumulate((tm <= 0.5).mean(axis=1))
    m_hat_m = median_survival_estimate(cdf, horizon, q)
    return cdf, m_hat_m


@dataclass(frozen=True)
class KaplanMeierFit:
    """Product-limit estimate: right-continuous step function."""

    event_times: np.ndarray
    values: np.ndarray  # S after each event time

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right")
        steps = np.concatenate([[1.0], self.values])
        return steps[idx]

    __call__ = evaluate


def kaplan_meier(data):
    """Kaplan-Meier estimator; censored times only shrink the risk set."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    times = data.times
    events = data.events
    tks = np.unique(times[events])
    surv = []
    s = 1.0
    for tk in tks:
        at_risk = int(np.sum(times >= tk))
        deaths = int(np.sum(times[events] == tk))
        s *= 1.0 - deaths / at_risk
        surv.append(s)
    return KaplanMeierFit(tks, np.asarray(surv))


class EmpiricalMedian(NamedTuple):
    value: float
    open_ended: bool


def empirical_median(data):
    """Smallest time at which the Kaplan-Meier curve drops to 1/2 or below."""
    km = kaplan_meier(data)
    if len(km.event_times) == 0:
        raise ValueError("no exact events in the dataset")
    below = km.values <= 0.5
    if not below.any():
        return EmpiricalMedian(float(km.event_times[-1]), True)
    return EmpiricalMedian(float(km.event_times[np.argmax(below)]), False)


@dataclass
class PosteriorSummary:
    t_grid: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    mode: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    marginal_lo: np.ndarray
    marginal_hi: np.ndarray
    km: np.ndarray
    c: np.ndarray
    m_hat: float
    m_interval: MedianInterval
    marginal_cdf: np.ndarray
    m_hat_m: float
    m_marginal_interval: MedianInterval
    m_hat_e: EmpiricalMedian
    level: float
    diagnostics: dict = field(default_factory=dict)


def posterior_summary(grid, data, level=0.95, n_sim=1000, seed=0):
    """Full posterior summary from a chain's moment grid.

    Per grid point, reconstructs the posterior of the survival function
    from its averaged moments, then assembles intervals, the posterior of
    the median survival time, the marginal-method counterparts, and the
    Kaplan-Meier baseline.
    """
    q, n_mom = grid.moments.shape
    horizon = float(grid.t_grid[-1])
    seeds = np.random.SeedSequence(seed).generate_state(q)
    samples = []
    modes = np.empty(q)
    for i in range(q):
        row = MomentVector(tuple(grid.moments[i]))
        if row.variance < DEGENERATE_VARIANCE:
            samples.append(np.full(n_sim, row.mean))
            modes[i] = row.mean
            continue
        res = _reconstruct(row, n_sim, int(seeds[i]))
        samples.append(res.psample)
        modes[i] = float(res.xgrid[np.argmax(res.approx_density)])
    mean = np.array([s.mean() for s in samples])
    median = np.array([np.median(s) for s in samples])
    ci = np.array([credible_interval(s, level) for s in samples])
    mi = np.array([marginal_interval(grid.mean_trace[i], level) for i in range(q)])
    c = median_survival_cdf(samples)
    m_hat = median_survival_estimate(c, horizon, q)
    m_int = median_interval(c, grid.t_grid, level)
    mcdf, m_hat_m = marginal_median_cdf(grid.mean_trace, horizon)
    m_marg_int = median_interval(mcdf, grid.t_grid, level)
    km = kaplan_meier(data).evaluate(grid.t_grid)
    return PosteriorSummary(
        t_grid=grid.t_grid,
        mean=mean,
        median=median,
        mode=modes,
        lo=ci[:, 0],
        hi=ci[:, 1],
        marginal_lo=mi[:, 0],
        marginal_hi=mi[:, 1],
        km=km,
        c=c,
        m_hat=m_hat,
        m_interval=m_int,
        marginal_cdf=mcdf,
        m_hat_m=m_hat_m,
        m_marginal_interval=m_marg_int,
        m_hat_e=empirical_median(data),
        level=level,
        diagnostics=dict(grid.diagnostics),
    )
