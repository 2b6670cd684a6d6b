"""Annealed free energy of random-code channel outputs: branches, phase boundaries,
derived exponents and finite-n verification."""

__version__ = "0.1.0"
