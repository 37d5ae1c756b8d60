"""Numerical laboratory for the parabolic dominative p-Laplace equation."""
__version__ = "0.1.0"
