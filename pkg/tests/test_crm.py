import numpy as np
import pytest
from scipy import stats

from momentsurv.crm import (
    gamma_crm_jumps,
    sample_joint_prior,
    sample_latents_given_crm,
    sample_survival_times,
)


def test_total_mass_is_gamma_distributed():
    # total mass of a gamma CRM with intensity c*P0 is Gamma(c, 1)
    c = 2.5
    rng = np.random.default_rng(0)
    totals = np.array([gamma_crm_jumps(c, 3.0, rng)[0].sum() for _ in range(4000)])
    assert stats.kstest(totals, stats.gamma(c).cdf).pvalue > 0.01


def test_jump_locations_follow_base_measure():
    rng = np.random.default_rng(1)
    locs = np.concatenate([gamma_crm_jumps(2.0, 3.0, rng)[1] for _ in range(300)])
    assert stats.kstest(locs, stats.expon(scale=1.0 / 3.0).cdf).pvalue > 0.01


def test_jumps_sorted_decreasing():
    rng = np.random.default_rng(2)
    sizes, locs = gamma_crm_jumps(1.5, 3.0, rng)
    assert len(sizes) == len(locs)
    assert np.all(np.diff(sizes) <= 0.0)
    assert np.all(sizes > 0.0)


def test_survival_times_exceed_smallest_atom():
    # with a single atom at y0, no survival time can fall below y0
    rng = np.random.default_rng(3)
    x = sample_survival_times(np.array([5.0]), np.array([0.7]), 1.0, 200, rng)
    assert np.all(x > 0.7)


def test_survival_times_match_conditional_law():
    # given the CRM, S(t|mu) = exp(-beta * sum_k J_k (t - y_k)_+)
    rng = np.random.default_rng(4)
    sizes = np.array([1.2, 0.5])
    locs = np.array([0.2, 1.0])
    beta = 1.3
    x = sample_survival_times(sizes, locs, beta, 20000, rng)

    def surv(t):
        return np.exp(-beta * np.sum(sizes * np.clip(t - locs, 0.0, None)))

    for t in (0.5, 1.0, 2.0):
        emp = np.mean(x > t)
        se = np.sqrt(emp * (1 - emp) / len(x)) + 1e-9
        assert abs(emp - surv(t)) < 4 * se


def test_latents_weighted_by_jump_size():
    rng = np.random.default_rng(5)
    sizes = np.array([3.0, 1.0])
    locs = np.array([0.1, 0.2])
    draws = np.array([sample_latents_given_crm(sizes, locs, 1.0, rng) for _ in range(8000)])
    frac = np.mean(draws == 0.1)
    assert frac == pytest.approx(0.75, abs=0.02)


def test_latents_respect_kernel_support():
    rng = np.random.default_rng(6)
    sizes = np.array([1.0, 1.0, 1.0])
    locs = np.array([0.1, 0.5, 2.0])
    draws = np.array([sample_latents_given_crm(sizes, locs, 1.0, rng) for _ in range(200)])
    assert np.all(draws <= 1.0)


def test_joint_prior_shapes_and_support():
    rng = np.random.default_rng(7)
    x, y = sample_joint_prior(2.0, 1.0, 3.0, 5, rng)
    assert x.shape == (5,)
    assert y.shape == (5,)
    assert np.all(y <= x)
    assert np.all(x > 0.0)


def test_prior_mean_survival_matches_laplace_functional():
    # E[S(t)] = exp(-c int_0^t log(1 + beta (t - y)) P0(dy)) by the
    # Laplace functional of the gamma CRM; Monte Carlo against it
    from scipy import integrate
    import math

    c, beta, p = 2.0, 1.0, 3.0
    t = 1.0
    val, _ = integrate.quad(
        lambda y: math.log1p(beta * (t - y)) * p * math.exp(-p * y), 0.0, t
    )
    target = math.exp(-c * val)
    rng = np.random.default_rng(8)
    n = 4000
    hits = 0
    for _ in range(n):
        sizes, locs = gamma_crm_jumps(c, p, rng)
        x = sample_survival_times(sizes, locs, beta, 1, rng)
        hits += int(x[0] > t)
    emp = hits / n
    se = math.sqrt(target * (1 - target) / n)
    assert abs(emp - target) < 4 * se
