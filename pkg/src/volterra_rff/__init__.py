"""Transmitter identification from wavelet-Volterra radio fingerprints."""

__version__ = "0.1.0"
