"""Density reconstruction on [0,1] from raw moments.

The reconstruction expands the unknown density in polynomials orthonormal
with respect to the beta-shaped weight w_{a,b}(s) = s^(a-1) (1-s)^(b-1),
truncates at level N, takes the positive part, and samples from it by
rejection against the Beta(a,b) proposal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
from numpy.polynomial import polynomial as npoly
import scipy.stats
from scipy import special as sps

from .moments import MomentVector

__all__ = [
    "JacobiBasis",
    "ApproxDensity",
    "PositivePart",
    "RejectionSample",
    "MomentifyResult",
    "select_weight_params",
    "build_basis",
    "approximate_density",
    "positive_part",
    "rejection_sample",
    "momentify",
]

MAX_TRUNCATION = 30
_BASIS_DPS = 60
_basis_cache = {}


def select_weight_params(gamma1, gamma2):
    """Weight parameters (a,b) matching the first two moments.

    Solves the beta mean/variance equations; falls back to the flat weight
    (1,1) when the variance is too large for any beta distribution.
    """
    if not 0.0 < gamma1 < 1.0:
        raise ValueError(f"first moment must lie in (0,1), got {gamma1}")
    v = gamma2 - gamma1 * gamma1
    if v <= 0.0:
        raise ValueError(f"degenerate variance {v}; cannot match a weight function")
    if v >= gamma1 * (1.0 - gamma1):
        return 1.0, 1.0
    common = gamma1 * (1.0 - gamma1) / v - 1.0
    return gamma1 * common, (1.0 - gamma1) * common


@dataclass(frozen=True)
class JacobiBasis:
    """Orthonormal polynomial basis w.r.t. w_{a,b} on [0,1].

    coeffs[i, r] is the coefficient of s^r in G_i, zero for r > i.
    The mpmath coefficient rows are kept so that the moment contractions
    lambda_i = sum_r G_{i,r} gamma_r can be done in extended precision.
    """

    a: float
    b: float
    N: int
    coeffs: np.ndarray
    mp_coeffs: tuple = field(repr=False, default=())

    def polyval(self, i, s):
        """Evaluate G_i at s (scalar or array)."""
        return npoly.polyval(np.asarray(s, dtype=float), self.coeffs[i, : i + 1])

    def weight(self, s):
        s = np.asarray(s, dtype=float)
        # exponents within rounding of 0 are treated as 0 so that grid
        # endpoints do not collapse to 0**eps = 0
        p, q = self.a - 1.0, self.b - 1.0
        left = np.ones_like(s) if abs(p) < 1e-9 else s**p
        right = np.ones_like(s) if abs(q) < 1e-9 else (1.0 - s) ** q
        return left * right


def build_basis(a, b, N):
    """Gram-Schmidt orthonormalization of 1, s, ..., s^N under w_{a,b}.

    Monomial inner products are the exact beta integrals
    <s^p, s^q> = B(a+p+q, b); the elimination is carried out in extended
    precision since the monomial Gram matrix is badly conditioned.
    """
    if a <= 0 or b <= 0:
        raise ValueError(f"weight parameters must be positive, got ({a}, {b})")
    if N < 1:
        raise ValueError("truncation level must be at least 1")
    if N > MAX_TRUNCATION:
        raise ValueError(f"truncation level {N} exceeds cap {MAX_TRUNCATION}")
    key = (float(a), float(b), int(N))
    if key in _basis_cache:
        return _basis_cache[key]
    with mp.workdps(_BASIS_DPS):
        am, bm = mp.mpf(a), mp.mpf(b)
        H = [[mp.beta(am + p + q, bm) for q in range(N + 1)] for p in range(N + 1)]

        def inner(u, v):
            return mp.fsum(u[p] * v[q] * H[p][q] for p in range(len(u)) for q in range(len(v)))

        rows = []
        for i in range(N + 1):
            # monomial s^i minus its projections on G_0..G_{i-1}
            cur = [mp.mpf(0)] * (i + 1)
            cur[i] = mp.mpf(1)
            for prev in rows:
                proj = inner(cur, prev)
                for r in range(len(prev)):
                    cur[r] -= proj * prev[r]
            nrm = mp.sqrt(inner(cur, cur))
            rows.append([c / nrm for c in cur])
        coeffs = np.zeros((N + 1, N + 1))
        for i, row in enumerate(rows):
            coeffs[i, : i + 1] = [float(c) for c in row]
        basis = JacobiBasis(float(a), float(b), int(N), coeffs, tuple(tuple(r) for r in rows))
    _basis_cache[key] = basis
    return basis


@dataclass(frozen=True)
class ApproxDensity:
    """Truncated expansion f_N(s) = w_{a,b}(s) * sum_i lambda_i G_i(s)."""

    xgrid: np.ndarray
    values: np.ndarray
    basis: JacobiBasis
    lambdas: np.ndarray
    moments_used: MomentVector
    poly_coeffs: np.ndarray = field(repr=False, default=None)

    def evaluate(self, s):
        """f_N at arbitrary points in [0,1]."""
        s = np.asarray(s, dtype=float)
        return self.basis.weight(s) * npoly.polyval(s, self.poly_coeffs)

    __call__ = evaluate


def _shift_endpoints(xgrid, a, b):
    """Move exact endpoints half a grid step inward where the weight blows up."""
    x = np.array(xgrid, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("xgrid must be a 1-D grid with at least two points")
    step = np.min(np.diff(np.unique(x)))
    if a < 1.0:
        x[x <= 0.0] = step / 2.0
    if b < 1.0:
        x[x >= 1.0] = 1.0 - step / 2.0
    return x


def approximate_density(m, basis, xgrid=None):
    """Evaluate the truncated moment-based expansion on a grid."""
    if not isinstance(m, MomentVector):
        m = MomentVector(tuple(m))
    if basis.N > len(m):
        raise ValueError(f"basis level {basis.N} needs {basis.N} moments, only {len(m)} given")
    if xgrid is None:
        xgrid = np.linspace(0.0, 1.0, 200)
    xg = _shift_endpoints(xgrid, basis.a, basis.b)
    if np.any(xg < 0.0) or np.any(xg > 1.0):
        raise ValueError("xgrid must lie within [0,1]")
    with mp.workdps(_BASIS_DPS):
        source = m.exact if m.exact is not None else m.values
        gam = [mp.mpf(1)] + [mp.mpf(v) for v in source]
        lambdas = np.array(
            [
                float(mp.fsum(basis.mp_coeffs[i][r] * gam[r] for r in range(i + 1)))
                for i in range(basis.N + 1)
            ]
        )
    poly = lambdas @ basis.coeffs
    values = basis.weight(xg) * npoly.polyval(xg, poly)
    return ApproxDensity(xg, values, basis, lambdas, m, poly)


@dataclass(frozen=True)
class PositivePart:
    """Unnormalized density max(f_N, 0) with a clipped-mass diagnostic."""

    density: ApproxDensity
    xgrid: np.ndarray
    values: np.ndarray
    clipped_fraction: float

    def evaluate(self, s):
        return np.maximum(self.density.evaluate(s), 0.0)

    __call__ = evaluate


def positive_part(d):
    """Clip the expansion at zero; fails if nothing positive remains."""
    f = d.values
    if np.all(f <= 0.0):
        raise ValueError("approximated density is nonpositive everywhere; empty support")
    pos = np.maximum(f, 0.0)
    total = np.trapezoid(np.abs(f), d.xgrid)
    clipped = -np.trapezoid(np.minimum(f, 0.0), d.xgrid)
    frac = float(clipped / total) if total > 0 else 0.0
    return PositivePart(d, d.xgrid, pos, frac)


@dataclass(frozen=True)
class RejectionSample:
    values: np.ndarray
    acceptance_rate: float
    envelope: float


def rejection_sample(pi, a, b, n_sim, seed):
    """Draw from the normalized positive part via a Beta(a,b) envelope.

    The envelope constant is 1.1 times the maximum of pi/p over a
    2000-point grid of proposal quantiles, p being the Beta(a,b)
    proposal density. Anchoring the grid on quantiles keeps the
    envelope tight for concentrated proposals, whose clipped-polynomial
    tails can make the ratio spike in regions of negligible mass.
    """
    probs = np.linspace(1.0 / 4000.0, 1.0 - 1.0 / 4000.0, 2000)
    grid = scipy.stats.beta.ppf(probs, a, b)
    lognorm = sps.betaln(a, b)
    basis = pi.density.basis
    matched = basis.a == a and basis.b == b
    if matched:
        # weight functions cancel: pi(s)/p(s) = B(a,b) * max(poly(s), 0)
        ratio = np.exp(lognorm) * np.maximum(npoly.polyval(grid, pi.density.poly_coeffs), 0.0)
    else:
        inner = np.clip(grid, 1e-12, 1.0 - 1e-12)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = pi.evaluate(inner) / np.exp(
                (a - 1.0) * np.log(inner) + (b - 1.0) * np.log1p(-inner) - lognorm
            )
        ratio = np.nan_to_num(ratio, nan=0.0, posinf=np.inf)
        if np.any(np.isinf(ratio)):
            raise ValueError("proposal Beta(a,b) cannot dominate the positive part")
    mmax = float(np.max(ratio))
    if mmax <= 0.0:
        raise ValueError("positive part vanishes on the envelope grid")
    M = 1.1 * mmax
    rng = np.random.default_rng(seed)
    out = np.empty(n_sim)
    filled = 0
    proposed = 0
    accepted = 0
    while filled < n_sim:
        batch = max(1024, 2 * (n_sim - filled))
        s = rng.beta(a, b, size=batch)
        u = rng.random(batch)
        if matched:
            keep = u * M < np.exp(lognorm) * np.maximum(
                npoly.polyval(s, pi.density.poly_coeffs), 0.0
            )
        else:
            p = np.exp((a - 1.0) * np.log(s) + (b - 1.0) * np.log1p(-s) - lognorm)
            keep = u * M * p < pi.evaluate(s)
        proposed += batch
        accepted += int(keep.sum())
        take = s[keep][: n_sim - filled]
        out[filled : filled + len(take)] = take
        filled += len(take)
        if proposed >= 10000 and accepted / proposed < 1e-3:
            raise RuntimeError(
                f"rejection sampler degenerate: acceptance {accepted / proposed:.2e}"
            )
    return RejectionSample(out, accepted / proposed, M)


@dataclass(frozen=True)
class MomentifyResult:
    xgrid: np.ndarray
    approx_density: np.ndarray
    psample: np.ndarray
    density: ApproxDensity
    positive: PositivePart
    acceptance_rate: float


def momentify(moments, n_moments=None, n_sim=1000, xgrid=None, seed=0):
    """Approximate a density from its raw moments and sample from it.

    Composes the weight-parameter choice, basis construction, truncated
    expansion, positive-part correction and rejection sampling.  Returns
    the grid, the density values on it, and the posterior sample.
    """
    if not isinstance(moments, MomentVector):
        moments = MomentVector(tuple(moments))
    if n_moments is None:
        n_moments = len(moments)
    if n_moments < 2:
        raise ValueError("at least two moments are required")
    if n_moments > len(moments):
        raise ValueError(f"asked for {n_moments} moments but only {len(moments)} available")
    if xgrid is None:
        xgrid = np.linspace(0.0, 1.0, 200)
    a, b = select_weight_params(moments[1], moments[2])
    basis = build_basis(a, b, n_moments)
    dens = approximate_density(moments, basis, xgrid)
    pos = positive_part(dens)
    samp = rejection_sample(pos, a, b, n_sim, seed)
    return MomentifyResult(dens.xgrid, dens.values, samp.values, dens, pos, samp.acceptance_rate)
