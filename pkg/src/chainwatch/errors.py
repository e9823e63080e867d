"""Exception taxonomy shared across the pipeline.

The CLI maps these onto process exit codes: DataError -> 3,
NumericError -> 4. Usage errors stay with argparse (exit 2).
"""


class ChainwatchError(Exception):
    """Base class for all package-raised errors."""


class DataError(ChainwatchError):
    """Malformed input data or a missing/inconsistent artifact."""


class NumericError(ChainwatchError):
    """Numeric failure (NaN/Inf, divergence) with diagnostics attached."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
