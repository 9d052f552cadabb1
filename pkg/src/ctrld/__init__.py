"""Counterfactual deception detection for Diplomacy negotiation messages."""

__version__ = "0.1.0"
