"""Exact-simulation toolkit for permutation-equivariant quantum graph networks."""

__version__ = "0.1.0"
