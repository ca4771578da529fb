"""Desk-scale character-level Chinese language model toolkit."""

__version__ = "0.1.0"
