"""Python bindings for the devgan core library."""

from ._devgan import *  # noqa: F401,F403
from ._devgan import (  # noqa: F401
    ContractError,
    DataError,
    FormatError,
    NumericError,
    RunConfig,
    ShapeError,
    UsageError,
)

__version__ = "0.1.0"
