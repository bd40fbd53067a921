"""CLI helpers for common flag/env handling."""

from __future__ import annotations

import logging
import os
import sys
from typing import Mapping, Optional, Sequence

TRUTHY = {"true", "1", "yes"}


def _argv(args: Optional[Sequence[str]] = None) -> Sequence[str]:
    return args if args is not None else sys.argv


def _env(env: Optional[Mapping[str, str]] = None) -> Mapping[str, str]:
    return env if env is not None else os.environ


def is_debug_mode(args: Optional[Sequence[str]] = None, env: Optional[Mapping[str, str]] = None) -> bool:
    """``--debug`` on the command line or HOMOFLOW_DEBUG set to a true value."""
    debug = _env(env).get("HOMOFLOW_DEBUG", "").lower()
    return "--debug" in _argv(args) or debug in TRUTHY


def is_extended_precision(env: Optional[Mapping[str, str]] = None) -> bool:
    return _env(env).get("HOMOFLOW_PRECISION", "").lower() == "extended"


def configure_logging(debug: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
