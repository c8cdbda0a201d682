"""Proof-of-work nonce search.

The compiled kernel is used when it imports; otherwise the pure-Python
implementation is selected. Set ``PREFIXCHAIN_PURE_PYTHON=1`` to force the
fallback.
"""

import os

from . import _pow_py

try:
    from ._powkernel import search as compiled_search
except ImportError:
    compiled_search = None

python_search = _pow_py.search
meets_target = _pow_py.meets_target

if compiled_search is not None and not os.environ.get("PREFIXCHAIN_PURE_PYTHON"):
    search = compiled_search
    BACKEND = "compiled"
else:
    search = python_search
    BACKEND = "python"

__all__ = ["BACKEND", "compiled_search", "meets_target", "python_search", "search"]
