"""Quantum-noise spectra of spin-ensemble and optomechanical light interfaces."""

__version__ = "0.1.0"
