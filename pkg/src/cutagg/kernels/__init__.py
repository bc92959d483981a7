"""Kernel lane selection: compiled extension if present, NumPy fallback otherwise.

Set ``CUTAGG_PURE_KERNELS=1`` in the environment to force the pure lane even
when the extension built.  Both lanes emit identical integer counts, so the
choice never changes a computed fraction.
"""

import os

from . import pure

HAVE_COMPILED = False
if not os.environ.get("CUTAGG_PURE_KERNELS"):
    try:
        from . import _core

        HAVE_COMPILED = True
    except ImportError:
        _core = None
else:
    _core = None

active = _core if HAVE_COMPILED else pure


def get_lane(name: str):
    """Fetch a lane by name ('pure' or 'compiled'); used by the benchmark."""
    if name == "pure":
        return pure
    if name == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernels are not available")
        return _core
    raise ValueError(f"unknown kernel lane {name!r}")


classify = active.classify
negatives = active.negatives
accumulate_pure = active.accumulate_pure
accumulate_counts = active.accumulate_counts
