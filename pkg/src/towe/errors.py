"""Exception types shared across the toolkit.

Everything user-facing (bad files, bad spans, numeric blow-ups) derives from
ToweError so the CLI can map expected failures to a clean exit code.
"""


class ToweError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(ToweError):
    """Malformed dataset file or an example violating the schema."""


class VocabError(ToweError):
    """Malformed vocabulary or merge file."""


class EncodingError(ToweError):
    """Input that cannot be turned into a model-ready encoding."""


class CheckpointError(ToweError):
    """Malformed parameter checkpoint or feature file."""


class NumericsError(ToweError):
    """Non-finite values encountered during optimization."""
