"""
Custom exceptions for the surrogate UQ toolkit.
"""
from typing import Optional


class UqSurroError(Exception):
    """Base exception for all toolkit errors."""

    exit_code = 1

    def __init__(self, message: str, code: Optional[str] = None):
        self.message = message
        self.code = code or "UNKNOWN_ERROR"
        super().__init__(self.message)

    def __str__(self):
        if self.code:
            return f"[{self.code}] {self.message}"
        return self.message


class ConfigurationError(UqSurroError):
    """Exception raised for malformed or inconsistent run configurations."""

    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        if key:
            message = f"{key}: {message}"
        super().__init__(message, "CONFIG_ERROR")


class ValidationError(UqSurroError):
    """Exception raised for input validation errors."""

    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        code = f"VALIDATION_ERROR{f'_{field.upper()}' if field else ''}"
        super().__init__(message, code)


class InvalidArchitectureError(UqSurroError):
    """Exception raised for a layer list that cannot form a network."""

    exit_code = 2

    def __init__(self, message: str):
        super().__init__(message, "INVALID_ARCHITECTURE")


class InvalidHyperparameterError(UqSurroError):
    """Exception raised when a hyperparameter lies outside its valid range."""

    exit_code = 2

    def __init__(self, message: str, name: Optional[str] = None):
        self.name = name
        code = f"INVALID_HYPERPARAMETER{f'_{name.upper()}' if name else ''}"
        super().__init__(message, code)


class ShapeError(UqSurroError):
    """Exception raised for array dimension mismatches."""

    def __init__(self, message: str):
        super().__init__(message, "SHAPE_ERROR")


class DomainError(UqSurroError):
    """Exception raised for values outside a function's domain."""

    def __init__(self, message: str):
        super().__init__(message, "DOMAIN_ERROR")


class StateError(UqSurroError):
    """Exception raised when an object is used before it is ready."""

    def __init__(self, message: str):
        super().__init__(message, "STATE_ERROR")


class TrainingDivergenceError(UqSurroError):
    """Exception raised when a training loss becomes NaN or infinite."""

    exit_code = 4

    def __init__(self, reason: str, last_finite_epoch: int = -1, context: Optional[str] = None):
        self.reason = reason
        self.last_finite_epoch = last_finite_epoch
        self.context = context
        label = f"{context}: {reason}" if context else reason
        super().__init__(f"{label} (last finite epoch: {last_finite_epoch})", "TRAINING_DIVERGENCE")

    def with_context(self, context: str) -> "TrainingDivergenceError":
        """Return a copy labelled with the method/response/member that diverged."""
        label = f"{context}/{self.context}" if self.context else context
        return TrainingDivergenceError(self.reason, self.last_finite_epoch, label)


class DataError(UqSurroError):
    """Exception raised for unusable input data."""

    exit_code = 3

    def __init__(self, message: str, code: str = "DATA_ERROR"):
        super().__init__(message, code)


class DataParseError(DataError):
    """Exception raised when a dataset file cannot be parsed."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message, "DATA_PARSE_ERROR")


class SchemaError(DataError):
    """Exception raised for an invalid input schema."""

    def __init__(self, message: str):
        super().__init__(message, "SCHEMA_ERROR")


class SplitError(DataError):
    """Exception raised when a train/val/test split cannot be formed."""

    def __init__(self, message: str):
        super().__init__(message, "SPLIT_ERROR")


class DegenerateDataError(DataError):
    """Exception raised for data without any variance to analyse."""

    def __init__(self, message: str):
        super().__init__(message, "DEGENERATE_DATA")


class CompatibilityError(DataError):
    """Exception raised when artifacts do not match the data they are applied to."""

    def __init__(self, message: str):
        super().__init__(message, "COMPATIBILITY_ERROR")


class StorageError(UqSurroError):
    """Exception raised for artifact storage errors."""

    def __init__(self, message: str, operation: Optional[str] = None):
        self.operation = operation
        code = f"STORAGE_ERROR{f'_{operation.upper()}' if operation else ''}"
        super().__init__(message, code)
