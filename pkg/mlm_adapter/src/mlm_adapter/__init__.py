"""Masked language model behind the NDJSON scoring protocol."""

__version__ = "0.1.0"
