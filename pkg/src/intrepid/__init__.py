"""Intrepid MCMC: a parent-guided explorative kernel mixed with component-wise Metropolis-Hastings."""

__version__ = "0.1.0"
