"""Sensitivity-first CKD screening with a five-part explainability toolkit."""

__version__ = "0.1.0"
