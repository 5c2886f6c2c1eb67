"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, remote reader errors exit 3.
"""


class ViqaError(Exception):
    """Base class for package errors."""


class UsageError(ViqaError):
    """Invalid command-line usage or configuration."""


class DataError(ViqaError):
    """Corpus, store, or index data problems."""


class IngestError(DataError):
    """Malformed input corpus file."""


class SegmenterError(DataError):
    """Dictionary or external word segmenter failure."""


class RemoteReaderError(ViqaError):
    """Remote reader endpoint unreachable or persistently failing."""


class ProtocolError(RemoteReaderError):
    """Remote reader returned a malformed or invariant-violating response."""
