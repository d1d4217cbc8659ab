"""Koopman spectra on Cantor space: gadgets, finite-section towers, and Xi_m oracles."""

__version__ = "0.1.0"

from . import cantor, dynamics, koopman, spectral_sets, tower, xi  # noqa: E402,F401
