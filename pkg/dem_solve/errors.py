"""Exception family shared by every dem_solve module."""
from typing import List, Optional


class DemSolveError(Exception):
    """Base class of all dem_solve errors."""


class InvalidDiscretizationError(DemSolveError, ValueError):
    pass


class InvalidThresholdError(DemSolveError, ValueError):
    pass


class InvalidOrderError(DemSolveError, ValueError):
    pass


class InvalidBoundaryError(DemSolveError, ValueError):
    pass


class InvalidMaterialError(DemSolveError, ValueError):
    pass


class IncompressibleLimitError(InvalidMaterialError):
    pass


class ContractError(DemSolveError, ValueError):
    pass


class FacetLookupError(DemSolveError, KeyError):
    pass


class NonFiniteLossError(DemSolveError, ArithmeticError):
    """Raised when an operation produces a non-finite value.

    Attributes:
        op: Tag of the operation that produced the offending value.
    """

    def __init__(self, op: str, message: Optional[str] = None):
        self.op = op
        super().__init__(message or f"non-finite value produced by '{op}'")


class InvertedElementError(NonFiniteLossError):
    def __init__(self, op: str = "det", message: Optional[str] = None):
        super().__init__(op, message or f"inverted element: determinant <= 0 in '{op}'")


class OracleFailureError(DemSolveError, RuntimeError):
    pass


class ConfigError(DemSolveError, ValueError):
    def __init__(self, diagnostics: List[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))
