"""Sparse-view cone-beam CT reconstruction with dual-domain conditional diffusion."""

__version__ = "0.1.0"
