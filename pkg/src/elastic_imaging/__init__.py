"""Elastic source imaging: Lamé forward solver, time reversal, Hankel framelets."""

__version__ = "0.1.0"
