"""Subset-weighted MCMC for tall data: Metropolis-Hastings on a randomly refreshed, representative data subset."""

__version__ = "0.1.0"
