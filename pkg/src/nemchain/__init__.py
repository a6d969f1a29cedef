"""Localization and thermalization in disordered nanoresonator chains, with pairwise entanglement."""

__version__ = "0.1.0"
