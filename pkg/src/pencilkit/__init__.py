"""Symbolic/numeric verification of compatible metric pencils and related structures."""

from . import _kernels
from .expr import Expr, const, differentiate, evaluate, parse, simplify, var

__version__ = "0.1.0"

BACKEND = _kernels.BACKEND

__all__ = ["Expr", "const", "var", "parse", "differentiate", "evaluate", "simplify", "BACKEND"]
