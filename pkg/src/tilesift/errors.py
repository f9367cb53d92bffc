"""Exception types shared across the package.

Each error carries a stable machine-readable ``code`` so the HTTP layer and
the CLI can map failures without string-matching messages.
"""

from __future__ import annotations


class TileSiftError(Exception):
    """Base class for all package errors."""

    code = "internal"


class InvalidArgumentError(TileSiftError, ValueError):
    """A caller-supplied value violates an operation's precondition."""

    code = "invalid-argument"


class CorruptIndexError(TileSiftError):
    """An index file failed validation; the message names the failing field."""

    code = "corrupt-index"


class DuplicateRecordError(TileSiftError):
    """A tile with the same (layer, date, matrix, row, col) key already exists."""

    code = "duplicate-record"


class NotFoundError(TileSiftError, KeyError):
    """Lookup of an item id that is not in the store."""

    code = "not-found"

    def __str__(self) -> str:
        # KeyError.__str__ repr-quotes the message; keep it plain.
        return Exception.__str__(self)


class InvalidConfigError(TileSiftError):
    """A configuration value (template, config file field) is unusable."""

    code = "invalid-config"


class InvalidImageError(TileSiftError):
    """Image bytes that cannot be decoded in their declared format."""

    code = "invalid-image"


class ProviderUnavailableError(TileSiftError):
    """The external embedding provider could not be reached."""

    code = "provider-unavailable"


class ProviderContractError(TileSiftError):
    """The external provider answered, but violated the wire contract."""

    code = "provider-contract-violation"


class DegenerateQueryError(TileSiftError):
    """Query aggregation produced a vector with no usable direction."""

    code = "degenerate-query"
