"""Predicting social signals of one person in a three-person conversation from the other two."""

__version__ = "0.1.0"
