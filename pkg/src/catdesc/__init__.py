"""Describer/interpreter framework for perceptual category description."""

__version__ = "0.1.0"
