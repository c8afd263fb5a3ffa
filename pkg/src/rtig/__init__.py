"""Response-time estimation for Rate-Monotonic task sets with inverse Gaussian mixtures."""

__version__ = "0.1.0"
