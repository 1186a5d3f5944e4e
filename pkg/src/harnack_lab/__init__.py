"""Numerical verification lab for parabolic Harnack machinery on model spaces."""

__version__ = "0.1.0"
