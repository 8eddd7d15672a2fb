"""Stein-method normal approximation for functionals of hidden Markov models."""

__version__ = "0.1.0"
