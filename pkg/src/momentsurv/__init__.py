"""Moment-based Bayesian nonparametric survival inference."""

__version__ = "0.1.0"
