"""Finite perimeter sets, isoperimetric profiles and concentration pieces on 2-D conformal grids."""

__version__ = "0.1.0"
