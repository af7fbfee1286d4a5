"""Shared exception types. CLI exit codes map onto these classes."""


class KgmatchError(Exception):
    """Base class for all package errors."""


class InputError(KgmatchError):
    """Malformed user input: unparseable documents, bad flags, missing files."""


class GraphParseError(InputError):
    """Graph/query document violates the record grammar (e.g. missing terminator)."""


class StateMismatchError(KgmatchError):
    """Artifacts disagree: index built over a different graph, dimension clash."""


class ProviderError(KgmatchError):
    """A remote embedding/generation provider failed after retries."""


class CapExceededError(KgmatchError):
    """A configured combinatorial cap (completions, assembly, fallback) was hit."""
