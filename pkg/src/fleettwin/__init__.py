"""Desk-scale digital twin for a heterogeneous inspection robot fleet."""

__version__ = "0.1.0"
