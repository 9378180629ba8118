"""Geometric-relations 3D multi-object tracking on sparse spatio-temporal graphs."""

__version__ = "0.1.0"
