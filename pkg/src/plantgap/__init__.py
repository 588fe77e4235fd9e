"""Planted 3SAT instances with manufactured small gaps in the adiabatic Hamiltonian."""

__version__ = "0.1.0"
