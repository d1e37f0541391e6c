"""Desk-scale laboratory for classes of coherent-receiver MIMO equalizers."""

__version__ = "0.1.0"
