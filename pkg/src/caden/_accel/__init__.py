"""Backend selection for the hot solver kernels.

The compiled Cython kernel is preferred when it has been built; otherwise the
numpy implementation is used.  ``BACKEND`` reports which one is active.  Both
expose the same ``two_loop_direction`` signature and agree numerically; the
benchmark under ``benchmarks/`` compares their throughput.
"""

from __future__ import annotations

from . import _lbfgs_py

try:
    from . import _lbfgs as _compiled
except ImportError:
    _compiled = None

if _compiled is not None:
    BACKEND = "compiled"
    two_loop_direction = _compiled.two_loop_direction
else:
    BACKEND = "python"
    two_loop_direction = _lbfgs_py.two_loop_direction


def available_backends() -> dict[str, object]:
    """Mapping of backend name to its two_loop_direction implementation."""
    out = {"python": _lbfgs_py.two_loop_direction}
    if _compiled is not None:
        out["compiled"] = _compiled.two_loop_direction
    return out
