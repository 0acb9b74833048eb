import math

import numpy as np
import pytest
from scipy import integrate

from momentsurv.hazard import (
    GammaCRMConfig,
    LatentState,
    MomentGridEvaluator,
    SurvivalDataset,
    conditional_moment,
    cumulative_kernel,
    cumulative_kernel_total,
    prior_log_factor,
    tau,
)
from momentsurv.moments import MomentVector, validate_moments


@pytest.fixture
def small_data():
    return SurvivalDataset(np.array([1.0, 2.0, 3.0]), np.array([True, True, False]))


from _oracles import brute_force_moment


def test_cumulative_kernel_values(small_data):
    # K_x(y) = beta * (x - y)_+ summed over observations
    assert cumulative_kernel(2.0, 0.5, 1.0) == pytest.approx(1.5)
    assert cumulative_kernel(2.0, 2.5, 1.0) == 0.0
    assert cumulative_kernel_total(0.5, small_data, 2.0) == pytest.approx(
        2.0 * (0.5 + 1.5 + 2.5)
    )


def test_exposure_matches_direct_sum(small_data):
    rng = np.random.default_rng(0)
    ys = rng.uniform(0.0, 4.0, size=50)
    direct = np.array([np.sum(np.clip(small_data.times - y, 0.0, None)) for y in ys])
    assert np.allclose(small_data.exposure(ys), direct)


def test_tau_gamma_levy():
    # tau_m(u) = Gamma(m) / (1+u)^m
    assert tau(1, 0.0) == pytest.approx(1.0)
    assert tau(3, 1.0) == pytest.approx(2.0 / 8.0)
    with pytest.raises(ValueError):
        tau(0, 1.0)


def test_prior_factor_at_origin(small_data):
    cfg = GammaCRMConfig(c=2.0)
    assert prior_log_factor(0.0, 1, small_data, cfg, 1.0) == pytest.approx(0.0)


def test_prior_factor_monotone_in_t(small_data):
    cfg = GammaCRMConfig(c=2.0)
    vals = [prior_log_factor(t, 1, small_data, cfg, 1.0) for t in (0.5, 1.0, 2.0, 4.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_conditional_moment_trivial_cases(small_data):
    state = LatentState(np.array([0.5, 0.7, 1.5]), 2.0, 1.0)
    assert conditional_moment(0.0, 1, small_data, state, GammaCRMConfig(2.0)) == 1.0
    assert conditional_moment(1.5, 0, small_data, state, GammaCRMConfig(2.0)) == 1.0


def test_conditional_moment_against_quadrature_oracle(small_data):
    state = LatentState(np.array([0.5, 0.7, 1.5]), 2.0, 1.0)
    cfg = GammaCRMConfig(2.0)
    for t in (0.8, 1.5, 3.5):
        for r in (1, 2, 3):
            got = conditional_moment(t, r, small_data, state, cfg)
            want = brute_force_moment(t, r, small_data, state, cfg)
            assert got == pytest.approx(want, rel=1e-8)


def test_conditional_moments_decrease_in_t_and_r(small_data):
    state = LatentState(np.array([0.5, 0.7, 1.5]), 2.0, 1.0)
    cfg = GammaCRMConfig(2.0)
    ts = np.linspace(0.2, 5.0, 12)
    vals = [conditional_moment(t, 1, small_data, state, cfg) for t in ts]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    rs = [conditional_moment(2.0, r, small_data, state, cfg) for r in range(1, 6)]
    assert all(b < a for a, b in zip(rs, rs[1:]))


def test_grid_evaluator_matches_scalar_op(small_data):
    state = LatentState(np.array([0.5, 0.7, 1.5]), 2.0, 1.0)
    cfg = GammaCRMConfig(2.0)
    t_grid = np.linspace(0.3, 4.5, 8)
    ev = MomentGridEvaluator(small_data, t_grid, 5)
    got = ev.moments(state)
    for i, t in enumerate(t_grid):
        for r in range(1, 6):
            want = conditional_moment(t, r, small_data, state, cfg)
            assert got[i, r - 1] == pytest.approx(want, rel=1e-9)


def test_grid_evaluator_rows_are_valid_moment_sequences(small_data):
    rng = np.random.default_rng(3)
    t_grid = np.linspace(0.12, 6.0, 50)
    ev = MomentGridEvaluator(small_data, t_grid, 10)
    for _ in range(5):
        state = LatentState(
            rng.uniform(0.0, 1.0, 3) * small_data.times,
            rng.gamma(2.0),
            rng.gamma(2.0),
        )
        rows = ev.moments(state)
        for row in rows:
            assert validate_moments(MomentVector(tuple(row)), tol=1e-9).ok


def test_dataset_validation():
    with pytest.raises(ValueError):
        SurvivalDataset(np.array([1.0, -2.0]), np.array([True, True]))
    with pytest.raises(ValueError):
        SurvivalDataset(np.array([1.0]), np.array([True, False]))


def test_latent_state_clusters():
    state = LatentState(np.array([0.5, 0.5, 1.2]), 1.0, 1.0)
    ystar, counts = state.distinct()
    assert list(ystar) == [0.5, 1.2]
    assert list(counts) == [2, 1]
    assert state.n_clusters == 2
