"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementations
when it is absent or when ENTROSPLAT_PURE=1 is set.  Both backends share
signatures and semantics, and `bench` compares them side by side.
"""

import os

from . import _pure

if os.environ.get("ENTROSPLAT_PURE", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

active = _compiled if _compiled is not None else _pure
pure = _pure
compiled = _compiled


def backend_name():
    return "compiled" if _compiled is not None else "pure"


def have_compiled():
    return _compiled is not None
