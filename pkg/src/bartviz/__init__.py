"""Posterior diagnostics and visualization for Bayesian additive regression trees."""

__version__ = "0.1.0"
