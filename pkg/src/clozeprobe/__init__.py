"""Cloze-style knowledge probe: compile single-token queries from
relational facts, score them with pluggable backends, and report filtered
rank metrics."""

__version__ = "0.1.0"
