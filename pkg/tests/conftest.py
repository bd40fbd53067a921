"""Test configuration for the homoflow package."""

import sys
from pathlib import Path

from hypothesis import settings

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if SRC.exists():
    sys.path.insert(0, str(SRC))

settings.register_profile("homoflow", max_examples=200, derandomize=True, deadline=None)
settings.load_profile("homoflow")
