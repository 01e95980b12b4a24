"""Differentiable quantum circuits for nonlinear differential equations."""

__version__ = "0.1.0"
