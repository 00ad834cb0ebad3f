"""Lapse classifiers, retention-gain economics and cross-validated evaluation."""

__version__ = "0.1.0"
