"""Deck-driven multiphysics kernel coupling finite elements and finite
volumes inside a single global matrix."""

__version__ = "0.1.0"
