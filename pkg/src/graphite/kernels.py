"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Setting ``GRAPHITE_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _fallback

if os.environ.get("GRAPHITE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

bce_logits = _impl.bce_logits
pair_dot = _impl.pair_dot
pair_dot_backward = _impl.pair_dot_backward

__all__ = ["BACKEND", "bce_logits", "pair_dot", "pair_dot_backward"]
