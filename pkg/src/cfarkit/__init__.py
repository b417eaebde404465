"""Sliding-window CFAR detection toolkit for single-channel SAR rasters."""

__version__ = "0.1.0"
