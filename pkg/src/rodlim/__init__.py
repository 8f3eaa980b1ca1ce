"""Incompressible rod limit energies: cross-section cell problems, torsion, and 1D rod models."""

__version__ = "0.1.0"
