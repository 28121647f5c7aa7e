"""Variational gluing of outer arcs and inner Jacobi geodesics for the planar N-centre problem."""

__version__ = "0.1.0"
