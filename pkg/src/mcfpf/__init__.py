"""Phase-field approximation of multi-phase mean curvature flow."""

__version__ = "0.1.0"
