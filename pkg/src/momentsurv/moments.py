"""Raw moment sequences of [0,1]-valued random variables.

A moment vector stores the first d raw moments (gamma_1, ..., gamma_d);
gamma_0 = 1 is implicit and never stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MomentVector",
    "Violation",
    "ValidationReport",
    "validate_moments",
    "rising_factorial",
    "beta_mixture_moments",
    "read_moments_csv",
    "write_moments_csv",
]

LOGCONVEXITY_TOL = 1e-12


@dataclass(frozen=True)
class MomentVector:
    """First d raw moments of a random variable supported on [0,1], d >= 2.

    Analytic generators may attach `exact` (extended-precision copies of the
    same moments); downstream contractions that are badly conditioned in
    float64 use them when present.
    """

    values: tuple
    exact: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise ValueError("a moment vector needs at least two moments")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("moment entries must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, r):
        """Moment of order r, with gamma_0 = 1 implicit."""
        if r == 0:
            return 1.0
        return self.values[r - 1]

    def as_array(self):
        return np.asarray(self.values)

    @property
    def mean(self):
        return self.values[0]

    @property
    def variance(self):
        return self.values[1] - self.values[0] ** 2


@dataclass(frozen=True)
class Violation:
    condition: str
    index: int
    magnitude: float

    def __str__(self):
        return f"{self.condition} at r={self.index} (magnitude {self.magnitude:.3g})"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


def validate_moments(m, strict=False, tol=LOGCONVEXITY_TOL):
    """Check necessary moment-sequence conditions for a [0,1] variable.

    Checks range, monotonicity and Lyapunov log-convexity of the sequence
    (with gamma_0 = 1).  With strict=True, additionally runs the full
    Hausdorff iterated-difference check, which is numerically fragile for
    long sequences (d beyond roughly 15).
    """
    if not isinstance(m, MomentVector):
        m = MomentVector(tuple(m))
    g = np.concatenate([[1.0], m.as_array()])
    d = len(m)
    report = ValidationReport()
    for r in range(1, d + 1):
        if g[r] < -tol or g[r] > 1.0 + tol:
            report.violations.append(Violation("range", r, float(max(-g[r], g[r] - 1.0))))
    for r in range(0, d):
        if g[r + 1] > g[r] + tol:
            report.violations.append(Violation("monotonicity", r, float(g[r + 1] - g[r])))
    for r in range(1, d):
        gap = g[r] ** 2 - g[r - 1] * g[r + 1]
        if gap > tol:
            report.violations.append(Violation("log-convexity", r, float(gap)))
    if strict:
        # Hausdorff: (-1)^k Delta^k gamma_j >= 0 for all k + j <= d.
        diff = g.copy()
        for k in range(1, d + 1):
            diff = diff[1:] - diff[:-1]
            for j, v in enumerate((-1) ** k * diff):
                if v < -tol:
                    report.violations.append(Violation(f"hausdorff-difference k={k}", j, float(-v)))
    return report


def rising_factorial(x, r):
    """Rising factorial x(x+1)...(x+r-1); equals Gamma(x+r)/Gamma(x)."""
    if x <= 0:
        raise ValueError(f"rising_factorial requires x > 0, got {x}")
    if r < 0 or int(r) != r:
        raise ValueError(f"order must be a nonnegative integer, got {r}")
    out = 1.0
    for i in range(int(r)):
        out *= x + i
    return out


def beta_mixture_moments(params, weights, d):
    """Raw moments of a finite mixture of beta distributions.

    gamma_r = sum_k w_k * (a_k)_(r) / (a_k + b_k)_(r), r = 1..d.
    """
    params = [(float(a), float(b)) for a, b in params]
    weights = np.asarray(weights, dtype=float)
    if len(params) != len(weights):
        raise ValueError("one weight per beta component is required")
    if d < 2:
        raise ValueError("at least two moments are required")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError("weights must be nonnegative and sum to 1")
    for a, b in params:
        if a <= 0 or b <= 0:
            raise ValueError("beta shape parameters must be positive")
    # computed in extended precision: the moment -> expansion-coefficient
    # contraction downstream cancels catastrophically in float64
    import mpmath as mp

    with mp.workdps(60):
        exact = []
        for r in range(1, d + 1):
            g = mp.fsum(
                mp.mpf(w) * mp.rf(mp.mpf(a), r) / mp.rf(mp.mpf(a) + mp.mpf(b), r)
                for (a, b), w in zip(params, weights)
            )
            exact.append(g)
    return MomentVector(tuple(float(g) for g in exact), exact=tuple(exact))


def write_moments_csv(m, path):
    """Single-column CSV, header `moment`, rows gamma_1..gamma_d."""
    if not isinstance(m, MomentVector):
        m = MomentVector(tuple(m))
    with open(path, "w") as fh:
        fh.write("moment\n")
        for v in m.values:
            fh.write(f"{v:.12g}\n")


def read_moments_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "moment":
            raise ValueError(f"expected header 'moment', got {header!r}")
        vals = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise ValueError(f"unparseable moment on line {lineno}: {line!r}") from None
    return MomentVector(tuple(vals))
