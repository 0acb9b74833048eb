import numpy as np
import pytest

from momentsurv import functionals as fn
from momentsurv.cli import simulate_weibull
from momentsurv.gibbs import ChainConfig, run_chain


def _replicate(n, seed):
    data = simulate_weibull(n, seed=seed)
    cfg = ChainConfig(M=6.0, L=10000, burn_in=5000, thin=5, q=50, N=10, seed=seed)
    grid = run_chain(data, cfg)
    summary = fn.posterior_summary(grid, data, level=0.95, n_sim=1000, seed=seed)
    return grid, summary


@pytest.fixture(scope="session")
def replicates_n500():
    """Ten seeded Weibull(2,2) experiments at n=500, full-length chains."""
    return [_replicate(500, seed) for seed in range(10)]


@pytest.fixture(scope="session")
def replicates_n20():
    """Ten seeded Weibull(2,2) experiments at n=20, full-length chains."""
    return [_replicate(20, 100 + seed) for seed in range(10)]
