"""Exception taxonomy shared across the library.

The CLI maps these onto stable exit codes: usage errors exit 1, data and
format errors exit 2, numeric failures exit 3.
"""


class ShapeError(ValueError):
    """Operands have incompatible or unexpected shapes."""


class ConfigError(ValueError):
    """An operation was asked for an unsupported configuration."""


class ContractError(ValueError):
    """A caller violated an API precondition (for example a non-scalar loss)."""


class NonFiniteError(ArithmeticError):
    """NaN or infinity showed up where only finite values are allowed."""


class PaddingRequiredError(ShapeError):
    """Input spatial size is not divisible by the network's total stride."""


class ArchiveError(ValueError):
    """A tensor archive is malformed or missing."""


class CodebookError(ValueError):
    """A codebook file is malformed, incompatible, or conflicting."""


class ImageCodecError(ValueError):
    """An image byte stream is unsupported or corrupt."""


class TrainingAborted(RuntimeError):
    """Training hit a non-finite loss or gradient and stopped early."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
