"""Planar dexterous-hand playground."""

__version__ = "0.1.0"
