"""Blocked thin-plate-spline reconstruction and adaptive glider path control."""

__version__ = "0.1.0"
