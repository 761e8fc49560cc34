"""Exception hierarchy.

Every error raised on purpose derives from :class:`DeclMLError` and is either a
:class:`UserError` (bad config, bad data, missing file; CLI exit code 1) or a
:class:`RuntimeFailure` (numerical blow-up, damaged artifact; CLI exit code 2).
"""

from __future__ import annotations


class DeclMLError(Exception):
    exit_code = 2


class UserError(DeclMLError):
    exit_code = 1


class RuntimeFailure(DeclMLError):
    exit_code = 2


# --- configuration -----------------------------------------------------------


class ConfigSyntaxError(UserError):
    """Malformed configuration document; ``line``/``column`` are 1-based."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(UserError):
    """A semantic config error attributed to exactly one config path."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class PathError(UserError):
    def __init__(self, path: str, reason: str = "path does not resolve to a scalar slot"):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class TypeMismatch(UserError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class UnknownType(UserError):
    pass


class UnknownCapability(UserError):
    pass


# --- data --------------------------------------------------------------------


class MissingColumn(UserError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"missing column: {column!r}")


class MalformedRow(UserError):
    def __init__(self, row: int, reason: str):
        self.row = row
        super().__init__(f"malformed row {row}: {reason}")


class BadRatios(UserError):
    pass


class BadSplitLabel(UserError):
    pass


class EmptyTrainSplit(UserError):
    pass


class AllMissingColumn(UserError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"column {column!r} has no parseable numeric value")


class BadBinaryLiteral(UserError):
    pass


class BadVectorLength(UserError):
    pass


class MissingFile(UserError):
    pass


# --- numerics ----------------------------------------------------------------


class ShapeMismatch(RuntimeFailure, ValueError):
    pass


class IndexOutOfRange(RuntimeFailure, IndexError):
    pass


class NotScalar(RuntimeFailure, ValueError):
    pass


class NonFiniteLoss(RuntimeFailure):
    pass


class MissingTarget(RuntimeFailure):
    pass


# --- evaluation / search -----------------------------------------------------


class LengthMismatch(UserError, ValueError):
    pass


class UnknownMetric(UserError):
    pass


class EmptySplit(UserError):
    pass


class InfiniteDomain(UserError):
    pass


class InvalidGoalMetric(ValidationError):
    pass


class AllTrialsFailed(RuntimeFailure):
    pass


# --- artifacts ---------------------------------------------------------------


class ArtifactIOError(UserError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{path}: {reason}")


class VersionMismatch(RuntimeFailure):
    pass


class CorruptArtifact(RuntimeFailure):
    def __init__(self, filename: str, reason: str = "content hash mismatch"):
        self.filename = filename
        super().__init__(f"{filename}: {reason}")
