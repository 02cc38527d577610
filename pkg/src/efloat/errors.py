class EFloatError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EFloatError, ValueError):
    pass


class CapacityError(ConfigError):
    """More distinct symbols than a K-bit code can address."""


class MissingSymbolError(EFloatError, KeyError):
    """A value's exponent (or sign+exponent) symbol has no code in the table."""

    def __init__(self, symbol: int, index: int | None = None):
        self.symbol = int(symbol)
        self.index = None if index is None else int(index)
        where = "" if index is None else f" at element {self.index}"
        super().__init__(f"symbol {self.symbol} has no code{where}")

    def __str__(self) -> str:
        return self.args[0]


class CorruptStreamError(EFloatError, ValueError):
    pass


class ModelFormatError(EFloatError, ValueError):
    pass


class ContainerError(EFloatError, ValueError):
    pass
