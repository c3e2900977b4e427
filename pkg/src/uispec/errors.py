"""Exception hierarchy shared across the engine.

Every error raised by this package derives from :class:`UispecError` so
callers can catch the whole family with one clause.  Parse-time errors keep
an optional ``code`` attribute that edit application uses to map failures
onto its own error vocabulary.
"""
from __future__ import annotations


class UispecError(Exception):
    """Base class for all package errors."""


# --- document parsing -------------------------------------------------------

class SpecSyntaxError(UispecError):
    """Input text is not well-formed JSON."""


class SchemaError(UispecError):
    """Missing field, unknown field, or a value of the wrong kind."""


class ConstraintError(UispecError):
    """A structural invariant is violated (duplicate id, bad hex, ...)."""

    def __init__(self, message: str, code: str = "constraint"):
        super().__init__(message)
        self.code = code


# --- path resolution --------------------------------------------------------

class PathError(UispecError):
    """Base class for path resolution failures."""


class PathNotFound(PathError):
    """The path does not address any node of the document."""


class PathAmbiguous(PathError):
    """An id segment matched more than one node (corrupted document)."""


# --- edit application -------------------------------------------------------

class EditApplyError(UispecError):
    """Base class for edit application failures."""


class TypeMismatch(EditApplyError):
    """The supplied value is incompatible with the target node."""


class VocabularyError(EditApplyError):
    """A component type outside the configured vocabulary."""


class IdCollision(EditApplyError):
    """An edit introduced a duplicate id."""


class RepairExhausted(UispecError):
    """Raised in strict mode when the bounded repair loop gives up."""

    def __init__(self, message: str, context=None):
        super().__init__(message)
        self.context = context


# --- model / detector clients -----------------------------------------------

class ClientError(UispecError):
    """Transport or model failure from a pluggable client."""


class ProtocolError(UispecError):
    """A client answered, but the response could not be parsed."""


class DetectorError(UispecError):
    """The region detector failed."""


class EmptyResult(UispecError):
    """The detector returned zero regions."""


# --- exemplar store ---------------------------------------------------------

class StorageError(UispecError):
    """The exemplar store could not be read or written."""


class EmptyStore(UispecError):
    """A query was issued against an empty store."""


class UnknownRecord(UispecError):
    """A retrieval hit references a record the store does not hold."""


# --- code generation ---------------------------------------------------------

class ContractError(UispecError):
    """Generated code is missing required section id markers."""


class ToolchainUnavailable(UispecError):
    """The configured compile toolchain could not be invoked."""


# --- metrics ------------------------------------------------------------------

class EmptyImage(UispecError):
    """An image with zero pixels was passed to a metric."""
