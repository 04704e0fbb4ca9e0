"""Kernel backend selection.

Prefers the compiled ``ostd._sais`` extension; falls back to the pure
Python implementation when the extension is not built. Both expose the
same three callables and are interchangeable (tests assert parity).
"""

from __future__ import annotations

try:
    from ostd import _sais as _impl
except ImportError:  # extension not compiled in this environment
    from ostd import _sais_py as _impl

BACKEND = _impl.BACKEND_NAME

build_suffix_array = _impl.build_suffix_array
count_range = _impl.count_range
fnv1a64 = _impl.fnv1a64
