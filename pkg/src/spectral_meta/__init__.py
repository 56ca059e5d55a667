"""Spectral diagnostics and condition-number regularization for few-shot meta-learning."""

__version__ = "0.1.0"
