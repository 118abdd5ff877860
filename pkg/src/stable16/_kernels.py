"""Float16 matmul kernel dispatch.

The sequentially rounded binary16 matmul is the hot loop of every fp16 run.
A small C extension (stable16._mm) implements it with hardware f16<->f32
conversion where available; this module falls back to a numpy loop with
identical semantics when the extension is missing. Both paths round after
every multiply and every add and seed each accumulator with the first
product, never with zero (visible through signed zeros).

Why float32 intermediates are exact: binary16 has 11 significand bits and
float32 has 24 > 2*11 + 2, so computing one +,-,*,/ or sqrt in float32 and
rounding once to binary16 yields exactly the correctly rounded binary16
result (no double-rounding error). numpy's half ufuncs work the same way.
"""

from __future__ import annotations

import numpy as np

try:
    from . import _mm as _native  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - build-environment dependent
    _native = None

HAVE_NATIVE = _native is not None


def mm_seq_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reference path: one rank-1 f16 update per shared index, ascending."""
    a = np.ascontiguousarray(a, dtype=np.float16)
    b = np.ascontiguousarray(b, dtype=np.float16)
    n = a.shape[1]
    if n == 0:
        raise ValueError("empty reduction has no defined accumulator seed")
    with np.errstate(all="ignore"):
        c = a[:, 0:1] * b[0:1, :]
        for r in range(1, n):
            c = c + a[:, r : r + 1] * b[r : r + 1, :]
    return c


def mm_seq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(p,n) x (n,q) float16 product under the per-operation rounding contract."""
    if a.shape[1] == 0:
        raise ValueError("empty reduction has no defined accumulator seed")
    if _native is not None:
        return _native.mm_seq(np.ascontiguousarray(a, dtype=np.float16),
                              np.ascontiguousarray(b, dtype=np.float16))
    return mm_seq_numpy(a, b)
