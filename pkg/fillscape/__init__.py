"""Fillscape - numerical laboratory for filling volumes and Finsler areas."""

__version__ = "0.1.0"
