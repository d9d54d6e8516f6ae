"""Exception types shared across the probe pipeline."""


class ProbeError(Exception):
    """Base class for all harness errors."""


class ParseError(ProbeError):
    """Malformed input data; carries the file path and 1-based line number."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class ConfigError(ProbeError):
    """Invalid run configuration (unknown relation, bad backend spec, ...)."""


class SingleTokenViolation(ProbeError):
    """An object that must be a single token spans several tokens."""


class EmptyVocabulary(ProbeError):
    """Vocabulary intersection came out empty; no candidates to rank."""


class EmptyReport(ProbeError):
    """Report aggregation received zero rank results."""


class DegenerateVariance(ProbeError):
    """Pearson correlation requested on a zero-variance input."""


class BackendUnavailable(ProbeError):
    """A scoring backend could not be reached or timed out."""


class ProtocolViolation(ProbeError):
    """A wire message violated the scoring protocol schema.

    ``offset`` is the byte offset of the offending line when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class VocabMismatch(ProbeError):
    """Backend handshake declared a different candidate vocabulary."""
