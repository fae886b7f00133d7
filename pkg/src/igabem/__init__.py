"""Adaptive isogeometric boundary element solver for the 2D single-layer equation."""

__version__ = "0.1.0"
