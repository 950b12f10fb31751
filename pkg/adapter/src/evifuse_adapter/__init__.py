"""Transformer-backed provider for the evifuse embedding and pair-score protocols."""

__version__ = "0.1.0"
