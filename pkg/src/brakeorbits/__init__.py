"""Brake orbits of symmetric Hamiltonian systems on R^{2n}."""
__version__ = "0.1.0"
