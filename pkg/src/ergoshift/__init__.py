"""Martingale-coboundary decompositions and LIL diagnostics for shift-invariant systems."""

__version__ = "0.1.0"

from .gordin_criteria import CriterionVerdict, GordinReport, NormSequence  # noqa: E402
from .product_space import Law, Observable, ShiftKind, ShiftSystem  # noqa: E402

__all__ = ["CriterionVerdict", "GordinReport", "Law", "NormSequence", "Observable", "ShiftKind",
           "ShiftSystem", "__version__"]
