"""Exception hierarchy shared across the package and the CLI exit codes."""


class GraphSlabError(Exception):
    """Base class for all package errors."""


class GraphError(GraphSlabError):
    """Invalid graph construction or graph-operation precondition."""


class ConfigError(GraphSlabError):
    """Invalid configuration / inputs (CLI exit code 2)."""


class NumericError(GraphSlabError):
    """Numerical failure: singular system, NaN/overflow, non-convergence
    (CLI exit code 3)."""


class NoValidCandidateError(GraphSlabError):
    """Model selection found no finitely-scored candidate (CLI exit code 4)."""
