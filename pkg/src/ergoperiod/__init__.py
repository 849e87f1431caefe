"""Random periodic paths, periodic measures, PS-ergodicity and upper expectations."""

__version__ = "0.1.0"

from .errors import ErgoperiodError  # noqa: F401
