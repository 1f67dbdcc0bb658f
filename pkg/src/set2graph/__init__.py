"""Equivariant set-to-graph networks with synthetic geometry tasks."""

__version__ = "0.1.0"
