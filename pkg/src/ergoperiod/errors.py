"""Exception hierarchy shared by all modules."""


class ErgoperiodError(Exception):
    """Base class for every error raised by this package."""


class NonCommensurateTime(ErgoperiodError, ValueError):
    """A time is not an integer multiple of the system's time mesh."""


class HorizonExceeded(ErgoperiodError, ValueError):
    pass


class PartitionMismatch(ErgoperiodError, ValueError):
    pass


class NumericalDegeneracy(ErgoperiodError, ArithmeticError):
    pass


class StateSpaceTooLarge(ErgoperiodError, ValueError):
    pass


class NotInvariant(ErgoperiodError, ValueError):
    pass


class SetNotRepresentable(ErgoperiodError, ValueError):
    pass


class GridIncommensurate(ErgoperiodError, ValueError):
    pass


class ConfigInvalid(ErgoperiodError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class EmptySeries(ErgoperiodError, OSError):
    pass
