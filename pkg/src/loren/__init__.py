"""Code-rate adaptive neural OFDM receiver with low-rank adapters."""

__version__ = "0.1.0"
