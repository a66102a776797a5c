"""Exception hierarchy shared by every oclbench module."""


class OclError(Exception):
    """Base class for all oclbench errors."""


class ContractError(OclError, ValueError):
    """A precondition on the inputs of an operation was violated."""


class DataError(OclError, ValueError):
    """Input data is malformed (non-finite values, empty classes, ...)."""


class FormatError(OclError):
    """A serialized record does not follow the OCLT layout."""


class TruncationError(FormatError):
    """Declared dims disagree with the payload length."""


class ChecksumError(FormatError):
    """Stored checksum does not match the record contents."""


class NumericError(OclError, ArithmeticError):
    """A factorization broke down.

    ``pivot`` is the zero-based index of the first non-positive pivot.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class StateError(OclError, RuntimeError):
    """An operation was called on a learner that cannot serve it yet."""


class ConfigError(OclError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
