"""Enums and exceptions shared across the package."""

from __future__ import annotations

from enum import Enum


class Boundary(str, Enum):
    OPEN = "open"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, value: "Boundary | str") -> "Boundary":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"boundary must be 'open' or 'periodic', got {value!r}") from None


class Basis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"

    @classmethod
    def parse(cls, value: "Basis | str") -> "Basis":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"basis must be one of x, y, z, got {value!r}") from None


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-convergence, vanishing norm, ...)."""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual norm {residual:.3e})")
        self.residual = residual
