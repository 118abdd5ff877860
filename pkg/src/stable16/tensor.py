"""Dense row-major tensors generic over scalar kind.

F16 tensors live as numpy float16 arrays, but the semantics are the
binary16 module's: every multiply and every add rounds to binary16 before
the next operation sees it (numpy half ufuncs and the matmul kernel both
compute each scalar op in float32+ and round once, which is exactly the
correctly rounded binary16 op; the conformance tests pin this down against
the pure-integer reference). F32/F64 are native reference precisions.

Tensors are immutable values: the backing array is marked read-only and
every operation allocates a fresh result.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class Kind(enum.Enum):
    F16 = "fp16"
    F32 = "fp32"
    F64 = "fp64"

    @property
    def dtype(self) -> np.dtype:
        return _DTYPES[self]

    @classmethod
    def from_name(cls, name: str) -> "Kind":
        for k in cls:
            if k.value == name:
                return k
        raise ValueError(f"unknown precision {name!r} (want fp16/fp32/fp64)")


_DTYPES = {
    Kind.F16: np.dtype(np.float16),
    Kind.F32: np.dtype(np.float32),
    Kind.F64: np.dtype(np.float64),
}


@dataclass(frozen=True, eq=False)
class Tensor:
    data: np.ndarray = field(repr=False)
    kind: Kind

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, kind={self.kind.value})"


def _wrap(arr: np.ndarray, kind: Kind) -> Tensor:
    arr = np.ascontiguousarray(arr, dtype=kind.dtype)
    arr.flags.writeable = False
    return Tensor(arr, kind)


def make(values, kind: Kind) -> Tensor:
    """Build a tensor from real-valued data, rounding once to the kind."""
    arr = np.asarray(values, dtype=np.float64)
    with np.errstate(all="ignore"):  # overflow to inf is data here, not an error
        return _wrap(arr.astype(kind.dtype), kind)


def zeros(shape, kind: Kind) -> Tensor:
    return _wrap(np.zeros(shape, dtype=kind.dtype), kind)


def from_bits(bits, shape=None) -> Tensor:
    """F16 tensor from raw 16-bit patterns (for checkpoints and tests)."""
    arr = np.asarray(bits, dtype="<u2")
    if shape is not None:
        arr = arr.reshape(shape)
    return _wrap(arr.view(np.float16), Kind.F16)


def bits(t: Tensor) -> np.ndarray:
    if t.kind is not Kind.F16:
        raise ValueError("bits() is defined for F16 tensors")
    return t.data.view("<u2").copy()


def to_f64(t: Tensor) -> np.ndarray:
    """Exact upcast of the stored values."""
    return t.data.astype(np.float64)


def transpose(t: Tensor) -> Tensor:
    """Layout change only; no arithmetic, no rounding."""
    return _wrap(t.data.T.copy(), t.kind)


def _same_kind(*ts: Tensor) -> Kind:
    kinds = {t.kind for t in ts}
    if len(kinds) != 1:
        raise ValueError(f"mixed scalar kinds: {sorted(k.value for k in kinds)}")
    return ts[0].kind


def matmul_t(w: Tensor, x: Tensor) -> Tensor:
    """out[i,j] = sum_r W[r,i] * X[r,j], reduction ascending in r.

    In F16 every product and partial sum is rounded; the accumulator is
    seeded with the r=0 product."""
    kind = _same_kind(w, x)
    if w.data.ndim != 2 or x.data.ndim != 2 or w.shape[0] != x.shape[0]:
        raise ValueError(f"matmul_t shapes {w.shape} x {x.shape} do not chain")
    if w.shape[0] == 0:
        raise ValueError("matmul_t needs a nonempty shared dimension")
    if kind is Kind.F16:
        return _wrap(_kernels.mm_seq(w.data.T, x.data), kind)
    return _wrap(w.data.T @ x.data, kind)


def affine(z: Tensor, b: Tensor) -> Tensor:
    """Add bias b (length k) to every column of z (k x m)."""
    kind = _same_kind(z, b)
    if z.data.ndim != 2 or b.data.ndim != 1 or z.shape[0] != b.shape[0]:
        raise ValueError(f"affine shapes {z.shape} + {b.shape} do not match")
    with np.errstate(all="ignore"):
        return _wrap(z.data + b.data[:, None], kind)


def _elementwise(op, x: Tensor, y: Tensor) -> Tensor:
    kind = _same_kind(x, y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    with np.errstate(all="ignore"):
        return _wrap(op(x.data, y.data), kind)


def add(x: Tensor, y: Tensor) -> Tensor:
    return _elementwise(np.add, x, y)


def sub(x: Tensor, y: Tensor) -> Tensor:
    return _elementwise(np.subtract, x, y)


def mul(x: Tensor, y: Tensor) -> Tensor:
    return _elementwise(np.multiply, x, y)


def scale(t: Tensor, c) -> Tensor:
    """Multiply by a scalar; c is rounded to the tensor's kind first."""
    with np.errstate(all="ignore"):
        cs = t.kind.dtype.type(float(c))
        return _wrap(t.data * cs, t.kind)


def conv2d_valid(img: Tensor, filt: Tensor) -> Tensor:
    """Valid (no padding, stride 1) 2-D cross-correlation.

    Reduction over window positions in row-major order with the same
    rounding/seeding contract as matmul_t."""
    kind = _same_kind(img, filt)
    if img.data.ndim != 2 or filt.data.ndim != 2:
        raise ValueError("conv2d_valid wants 2-D tensors")
    ih, iw = img.shape
    fh, fw = filt.shape
    if fh > ih or fw > iw or fh == 0 or fw == 0:
        raise ValueError(f"filter {filt.shape} does not fit in image {img.shape}")
    oh, ow = ih - fh + 1, iw - fw + 1
    acc = None
    with np.errstate(all="ignore"):
        for di in range(fh):
            for dj in range(fw):
                prod = img.data[di : di + oh, dj : dj + ow] * filt.data[di, dj]
                acc = prod if acc is None else acc + prod
    return _wrap(acc, kind)


_QNAN16 = np.uint16(0x7E00).view(np.float16)


def maxpool2(img: Tensor) -> Tensor:
    """2x2/stride-2 max pooling; max over the window in row-major order,
    first operand wins ties, any NaN in a window poisons its output."""
    if img.data.ndim != 2:
        raise ValueError("maxpool2 wants a 2-D tensor")
    h, w = img.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even dimensions, got {img.shape}")
    a = img.data[0::2, 0::2]
    quads = [img.data[0::2, 1::2], img.data[1::2, 0::2], img.data[1::2, 1::2]]
    m = a
    bad = np.isnan(a)
    with np.errstate(invalid="ignore"):
        for q in quads:
            m = np.where(q > m, q, m)
            bad |= np.isnan(q)
    if bad.any():
        m = m.copy()
        m[bad] = _QNAN16 if img.kind is Kind.F16 else np.nan
    return _wrap(m, img.kind)
