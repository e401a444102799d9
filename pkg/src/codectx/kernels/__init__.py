"""Hot-loop kernels with a compiled fast path and a pure-Python fallback.

The Cython extension ``codectx.kernels._native`` is preferred when it was
built; otherwise the implementations in ``codectx.kernels.pure`` are used.
Both backends are required to produce bit-identical results, and the test
suite enforces parity whenever the extension is importable.

Set ``CODECTX_PURE=1`` in the environment to force the pure backend (used
by the parity tests and the backend benchmark).
"""

from __future__ import annotations

import os

from . import pure


def load_native():
    """Return the compiled kernel module, or None if it is not built."""
    try:
        from . import _native  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _native


if os.environ.get("CODECTX_PURE") == "1":
    _impl = pure
    BACKEND = "pure"
else:
    _native_mod = load_native()
    if _native_mod is not None:
        _impl = _native_mod
        BACKEND = "native"
    else:
        _impl = pure
        BACKEND = "pure"

token_count = _impl.token_count
embed_accumulate = _impl.embed_accumulate

__all__ = ["BACKEND", "embed_accumulate", "load_native", "pure", "token_count"]
