"""Numerical and symbolic tools for six-dimensional monopole-type equations."""
__version__ = "0.1.0"
