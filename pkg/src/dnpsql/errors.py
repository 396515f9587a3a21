"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations


class DnPError(Exception):
    """Base class for all errors raised by dnpsql."""


# dataset


class MissingFile(DnPError, FileNotFoundError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"missing file: {path}")


class SchemaMismatch(DnPError):
    pass


class MalformedRecord(DnPError, ValueError):
    def __init__(self, index, reason: str, source: str | None = None):
        self.index = index
        self.reason = reason
        self.source = source
        where = f"{source}: " if source else ""
        super().__init__(f"{where}record {index}: {reason}")


# sqlkit


class ParseError(DnPError, ValueError):
    def __init__(self, message: str, position: int | None = None, expected: str | None = None):
        self.position = position
        self.expected = expected
        detail = message
        if position is not None:
            detail += f" at position {position}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class IncompleteClauseSet(DnPError, ValueError):
    pass


# prompts


class InsufficientDiversity(DnPError):
    pass


class IncompatibleDemos(DnPError, ValueError):
    pass


class EmptyInitialSql(DnPError, ValueError):
    pass


class NoSqlFound(DnPError):
    def __init__(self, raw: str):
        self.raw = raw
        preview = raw.strip().replace("\n", " ")[:80]
        super().__init__(f"no SQL found in response: {preview!r}")


# llm


class CacheMiss(DnPError, KeyError):
    def __init__(self, key: str, detail: str = ""):
        self.key = key
        super().__init__(f"no cached completion for key {key}" + (f" ({detail})" if detail else ""))

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return self.args[0]


class EndpointError(DnPError):
    def __init__(self, status: int | None, body: str):
        self.status = status
        self.body = body
        super().__init__(f"endpoint error {status}: {body[:200]}")


class Timeout(DnPError, TimeoutError):
    pass


# exec


class SqlError(DnPError):
    pass


class RowCapExceeded(DnPError):
    def __init__(self, row_cap: int):
        self.row_cap = row_cap
        super().__init__(f"result exceeds row cap of {row_cap}")


class EmptyInput(DnPError, ValueError):
    pass


class TrialMismatch(DnPError, ValueError):
    pass


# harness


class ConfigError(DnPError, ValueError):
    pass


class UnknownExampleId(DnPError, KeyError):
    def __str__(self) -> str:
        return self.args[0]


class MissingPrediction(DnPError, KeyError):
    def __init__(self, example_ids):
        self.example_ids = list(example_ids)
        super().__init__(f"missing predictions for: {', '.join(self.example_ids)}")

    def __str__(self) -> str:
        return self.args[0]


class RunError(DnPError):
    """Wraps a failure with the example it happened on."""

    def __init__(self, example_id: str, trial: int, cause: Exception):
        self.example_id = example_id
        self.trial = trial
        self.cause = cause
        super().__init__(f"{example_id} (trial {trial}): {type(cause).__name__}: {cause}")
