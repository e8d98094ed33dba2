"""Personalized voice activity detection benchmarking toolkit."""

__version__ = "0.1.0"
