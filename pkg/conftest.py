"""Pytest bootstrap: prefer the installed package, fall back to src/."""

import sys
from pathlib import Path

try:
    import caden  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))
