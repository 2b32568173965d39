"""Classifiers trained from pairwise same/different-class supervision."""

__version__ = "0.1.0"
