"""Numerical laboratory for backward stochastic evolution equations in
finite-dimensional l^q state spaces."""

__version__ = "0.1.0"
