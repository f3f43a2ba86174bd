"""Black-box membership inference against small generative models."""

__version__ = "0.1.0"
