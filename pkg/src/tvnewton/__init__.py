"""Preconditioned Newton solver for primal-dual finite element total variation problems."""

__version__ = "0.1.0"
