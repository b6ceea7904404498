"""User role discovery from check-in logs: features, k-means++, stabilization."""

__version__ = "0.1.0"
