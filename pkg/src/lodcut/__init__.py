"""Localized orthogonal decomposition for Poisson problems on unfitted domains."""

__version__ = "0.1.0"
