"""Exception types raised across the homoflow package."""

from __future__ import annotations

from typing import Any, Optional


class HomoflowError(Exception):
    """Base class for every error raised by homoflow."""


class ShapeMismatch(HomoflowError, ValueError):
    """Parameters or inputs do not fit the predictor's shape."""


class InvalidPartition(HomoflowError, ValueError):
    """Partition segments overlap, leave gaps or overrun the vector."""


class ZeroNorm(HomoflowError, ArithmeticError):
    """An operation needs a nonzero parameter norm."""


class ZeroVector(ZeroNorm):
    """An angle was requested against a zero vector."""


class ZeroMatrix(HomoflowError, ArithmeticError):
    pass


class DomainError(HomoflowError, ValueError):
    """Argument lies outside the domain of a loss-derived function."""


class WarmupFailed(HomoflowError, RuntimeError):
    """Plain gradient descent never brought the loss below ell(0)."""


class InitNotSeparating(HomoflowError, ValueError):
    """The initial iterate does not satisfy L(W) < ell(0)."""


class StalledFlow(HomoflowError, RuntimeError):
    """Step halving could not produce a non-increasing loss."""

    def __init__(self, message: str, state: Optional[Any] = None) -> None:
        super().__init__(message)
        self.state = state


class UnsupportedDimension(HomoflowError, ValueError):
    pass


class NotSeparable(HomoflowError, ArithmeticError):
    """The origin lies in the convex hull of the signed examples."""


class NotConverged(HomoflowError, RuntimeError):
    pass


class DegenerateData(HomoflowError, ValueError):
    """Generated data kept only one class after all retries."""


class ConfigError(HomoflowError, ValueError):
    pass


class NonFiniteParameters(HomoflowError, FloatingPointError):
    """A parameter vector picked up NaN or Inf entries."""
