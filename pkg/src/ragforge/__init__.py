"""ragforge: a self-contained retrieval-augmented generation pipeline engine."""

__version__ = "0.1.0"
