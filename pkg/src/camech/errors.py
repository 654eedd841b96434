"""Error types shared across the package.

The CLI maps these onto exit codes: InputError -> 1, CapabilityError -> 2.
Violations found by the harness are reported as data, not raised.
"""


class InputError(ValueError):
    """Malformed or out-of-range input (bad JSON field, bad index, bad price)."""


class CapabilityError(RuntimeError):
    """The instance is too large for an exact enumeration path."""


class InternalError(RuntimeError):
    """An internal contract was broken (e.g. a repair pass failed to converge)."""
