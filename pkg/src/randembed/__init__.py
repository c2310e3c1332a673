"""Embedding information in certified-random bit sequences."""

__version__ = "0.1.0"
