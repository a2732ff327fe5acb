"""Bessel-Gauss OAM spectra, SLM masks and back-projection simulation for SPDC."""

__version__ = "0.1.0"
