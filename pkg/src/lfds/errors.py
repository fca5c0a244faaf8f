"""Exception types shared across the package."""


class LfdsError(Exception):
    """Base class for all errors raised by lfds."""


class ShapeError(LfdsError, ValueError):
    pass


class ParameterError(LfdsError, ValueError):
    pass


class EmptyInputError(LfdsError, ValueError):
    pass


class ContractError(LfdsError, RuntimeError):
    pass


class IngestionError(LfdsError, OSError):
    """A mandatory input file is missing or unreadable."""


class FormatError(LfdsError, ValueError):
    """An input file is readable but malformed."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
