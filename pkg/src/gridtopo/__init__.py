"""Desk-scale power-grid topology-control simulator and agent suite."""

__version__ = "0.1.0"
