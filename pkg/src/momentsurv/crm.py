"""Simulation of the gamma CRM and of the survival model it induces.

Used for prior-predictive data generation (the data step of the Geweke
sampler-correctness test) and as an independent Monte-Carlo route to the
conditional moments.
"""

from __future__ import annotations

import numpy as np
from scipy import special as sps

__all__ = [
    "gamma_crm_jumps",
    "sample_survival_times",
    "sample_latents_given_crm",
    "sample_joint_prior",
]

# inverse of the exponential integral E1 on a log-log table; E1 is the
# gamma-process tail Levy measure, so jump sizes are E1^{-1}(arrivals / c)
_S_TABLE = np.logspace(-16, np.log10(60.0), 6000)
_LOGE1_TABLE = np.log(sps.exp1(_S_TABLE))


_EULER = 0.5772156649015329


def _exp1_inv(v):
    """Solve exp1(s) = v for s (vectorized; tabulated to ~1e-8 relative).

    Outside the table, the small-s expansion E1(s) = -log(s) - gamma and the
    large-s decay E1(s) ~ exp(-s)/s provide the continuation.
    """
    v = np.asarray(v, dtype=float)
    logv = np.log(v)
    # table is decreasing in s -> increasing in -logE1
    logs = np.interp(-logv, -_LOGE1_TABLE, np.log(_S_TABLE))
    logs = np.where(logv > _LOGE1_TABLE[0], -v - _EULER, logs)
    big = logv < _LOGE1_TABLE[-1]
    if np.any(big):
        s = -logv  # one fixed-point refinement of exp1(s) ~ exp(-s)/s
        s = -np.log(v * s)
        logs = np.where(big, np.log(s), logs)
    return np.exp(logs)


def gamma_crm_jumps(c, p0_rate, rng, tol=1e-12, batch=256):
    """Ferguson-Klass jumps of a gamma CRM with exponential base measure.

    Returns (sizes, locations); sizes are decreasing, truncated below tol.
    """
    gammas = []
    total = 0.0
    limit = float(sps.exp1(tol)) * c
    while total < limit:
        arr = rng.exponential(size=batch)
        arr[0] += total
        arr = np.cumsum(arr)
        total = arr[-1]
        gammas.append(arr)
    g = np.concatenate(gammas)
    kept = g[g < limit]
    if len(kept) == 0:
        kept = g[:1]  # keep the largest jump even when it falls below tol
    sizes = np.maximum(_exp1_inv(kept / c), 1e-300)
    locs = rng.exponential(scale=1.0 / p0_rate, size=len(sizes))
    return sizes, locs


def sample_survival_times(sizes, locs, beta, n, rng):
    """Draw n survival times from the hazard induced by a fixed CRM.

    The cumulative hazard H(t) = beta * sum_k s_k (t - y_k)+ is piecewise
    linear, so exponential deviates are inverted segment by segment.
    """
    order = np.argsort(locs)
    y = locs[order]
    s = sizes[order]
    w = np.cumsum(s)  # slope/beta after passing y_k
    v = np.cumsum(s * y)
    h_at_breaks = beta * (w * np.append(y[1:], np.inf) - v)
    h_at_breaks[-1] = np.inf
    e = rng.exponential(size=n)
    seg = np.searchsorted(h_at_breaks, e, side="right")
    seg = np.minimum(seg, len(y) - 1)
    return (e / beta + v[seg]) / w[seg]


def sample_latents_given_crm(sizes, locs, x, rng):
    """Latent location for an exact observation at x: atom w.p. prop. to jump."""
    mask = locs <= x
    if not mask.any():
        raise RuntimeError("no CRM atom available below the observation")
    p = sizes[mask]
    return float(rng.choice(locs[mask], p=p / p.sum()))


def sample_joint_prior(c, beta, p0_rate, n, rng, tol=1e-12):
    """One draw of (X, Y) from the marginal model given hyperparameters."""
    sizes, locs = gamma_crm_jumps(c, p0_rate, rng, tol=tol)
    x = sample_survival_times(sizes, locs, beta, n, rng)
    y = np.array([sample_latents_given_crm(sizes, locs, xi, rng) for xi in x])
    return x, y
