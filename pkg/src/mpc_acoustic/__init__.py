"""Masked predictive coding pre-training for acoustic sequences."""

__version__ = "0.1.0"
