"""Temporal NMF with Gamma Markov chain priors."""

__version__ = "0.1.0"
