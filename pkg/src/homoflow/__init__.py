"""Gradient-flow laboratory for positively homogeneous predictors."""

from .harness import main as run_cli  # noqa: F401
