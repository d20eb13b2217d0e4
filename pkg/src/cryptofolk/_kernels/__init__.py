"""Hot loops for phase-3 sampling, compiled when available.

The Cython extension is used if it was built and ``CRYPTOFOLK_PURE_PYTHON``
is unset; otherwise the numpy fallback is imported.  Both produce identical
arrays.
"""

from __future__ import annotations

import os

from . import _fallback

fallback = _fallback

if os.environ.get("CRYPTOFOLK_PURE_PYTHON"):
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else _fallback
BACKEND = "cython" if compiled is not None else "numpy"

prf_stream = _impl.prf_stream
draw_outcomes = _impl.draw_outcomes

__all__ = ["BACKEND", "prf_stream", "draw_outcomes", "compiled", "fallback"]
