"""Exception hierarchy.

Every error raised by the package derives from :class:`STHCSSError`. The
``exit_code`` attribute is what the command-line front end returns when the
error escapes a command: 1 for configuration/validation, 2 for I/O and file
formats, 3 for numerical or runtime failures.
"""


class STHCSSError(Exception):
    exit_code = 3


class ConfigError(STHCSSError, ValueError):
    exit_code = 1


class DimensionError(ConfigError):
    """Operand shapes do not agree."""


class InvalidArgumentError(ConfigError):
    pass


class InsufficientDataError(ConfigError):
    """A series or split is shorter than the window it has to feed."""


class SchemaError(ConfigError):
    pass


class FormatError(STHCSSError):
    exit_code = 2


class ParseError(FormatError, ValueError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyDataError(FormatError, ValueError):
    pass


class CheckpointFormatError(FormatError):
    pass


class NumericalError(STHCSSError, ArithmeticError):
    exit_code = 3


class DegenerateScaleError(NumericalError):
    """All node features coincide, so the Gaussian kernel bandwidth is zero."""


class DegenerateGraphError(NumericalError):
    pass


class DegenerateTargetError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message, epoch=None, batch=None, lr=None):
        super().__init__(f"{message} (epoch={epoch}, batch={batch}, lr={lr})")
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
