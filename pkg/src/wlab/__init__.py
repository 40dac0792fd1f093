"""Numerical lab for rotational Weingarten tori in the unit 3-sphere."""

__version__ = "0.1.0"
