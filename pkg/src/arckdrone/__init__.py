"""Aspect-ratio-constrained mask clustering and a simulated reconfigurable
sensing drone driven by a camera-crop perception pipeline."""

__version__ = "0.1.0"
