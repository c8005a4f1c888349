"""Semi-supervised target-oriented opinion word extraction with multi-grained consistency regularization."""

__version__ = "0.1.0"
