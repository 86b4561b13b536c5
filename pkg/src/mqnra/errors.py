"""Exception hierarchy for the workbench.

Anything user-visible (CLI, file ingestion, translation limits) raises a
subclass of WorkbenchError so the CLI can map it to exit status 1.
Differential verification failures are not exceptions; they are report
content and map to exit status 2.
"""


class WorkbenchError(Exception):
    """Base class for all diagnosable errors."""


class MalformedValueError(WorkbenchError):
    """A JSON value violates the document grammar (duplicate key, bad key, NaN)."""


class MergeConflictError(WorkbenchError):
    """Two trees cannot be merged: identical edge labels lead to incompatible nodes."""


class IllFormedProjectionError(WorkbenchError):
    """A projection list is inconsistent (prefix pair, or its parts merge-conflict)."""


class ParseError(WorkbenchError):
    """Concrete-syntax error with position information."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)


class SemanticError(WorkbenchError):
    """Syntactically valid input outside the supported fragment."""


class IngestionError(WorkbenchError):
    """A collection file violates the document/_id discipline."""


class MissingCollectionError(WorkbenchError):
    """A pipeline refers to a collection that the instance does not provide."""


class SchemaError(WorkbenchError):
    """A relational operation was applied to incompatible schemas or attributes."""


class NotWellTypedError(WorkbenchError):
    """A stage or pipeline fails the static type discipline."""

    def __init__(self, message, stage_index=None):
        self.stage_index = stage_index
        if stage_index is not None:
            message = f"stage {stage_index}: {message}"
        super().__init__(message)


class UnsupportedError(WorkbenchError):
    """A construct outside the implemented translation fragment."""


class ConfigError(WorkbenchError):
    """Missing or inconsistent workbench configuration (e.g. unconstrained collection)."""


class ResourceBudgetError(WorkbenchError):
    """A configured size or branching budget was exceeded."""
