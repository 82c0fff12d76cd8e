"""Tabletop rearrangement planning over imagined top-down observations."""

__version__ = "0.1.0"
