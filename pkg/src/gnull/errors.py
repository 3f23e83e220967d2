"""Exception hierarchy shared by every module.

Each exception carries a short machine-readable ``code`` so callers (and the
CLI) can branch on the failure kind without parsing messages.
"""

from __future__ import annotations


class GNullError(Exception):
    code = "error"


class SingularDesignError(GNullError):
    code = "singular design"


class SeparationError(GNullError):
    code = "separation"


class ConvergenceError(GNullError):
    code = "no convergence"


class DesignError(GNullError):
    """Bad design row: wrong length, missing history index, missing ``u``."""

    code = "design"


class EnumerationInfeasibleError(GNullError):
    code = "enumeration infeasible"


class BootstrapUnstableError(GNullError):
    code = "bootstrap unstable"


class CellFailureError(GNullError):
    code = "cell failure"


class ConfigError(GNullError):
    code = "config"


class DataSchemaError(GNullError):
    code = "data schema"
