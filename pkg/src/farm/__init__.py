"""Frequency-aware cross-domain live-streaming recommender."""

__version__ = "0.1.0"
