"""Exception hierarchy.

Input-side problems (bad files, bad values, bad shapes, bad configs) derive
from :class:`InputError` so the CLI can map them to exit status 1; anything
else escaping a command is treated as an internal failure.
"""


class CiderError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CiderError, ValueError):
    """Invalid user-supplied data (NaNs, negative pixels, unreadable images)."""


class ConfigurationError(InputError):
    """Invalid parameters: even kernel sizes, impossible wavelet levels, ..."""


class ShapeError(InputError):
    """Incompatible array shapes."""


class FormatError(InputError):
    """Malformed kernel, weights or image file."""


class ArchitectureError(FormatError):
    """Weights file does not match the declared network architecture."""


class ContractError(CiderError):
    """A caller broke an API precondition (e.g. backward on a non-scalar)."""


class BudgetError(ConfigurationError):
    """Generator configuration exceeds the parameter budget."""
