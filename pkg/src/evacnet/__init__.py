"""Crowd evacuation with a social-force environment and Dyna-Q learned policies."""

__version__ = "0.1.0"
