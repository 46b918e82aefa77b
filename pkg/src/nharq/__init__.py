"""Finite-blocklength analysis of non-orthogonal and orthogonal HARQ."""

from .config import HarqConfig, db_to_linear
from .fbl import CodeParams, SinrSegmentList, epsilon_cc, epsilon_ir, q_function, dispersion

__version__ = "0.1.0"

__all__ = [
    "CodeParams",
    "HarqConfig",
    "SinrSegmentList",
    "db_to_linear",
    "dispersion",
    "epsilon_cc",
    "epsilon_ir",
    "q_function",
]
