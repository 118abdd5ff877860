"""Software IEEE-754 binary16 arithmetic on raw 16-bit patterns.

Values are plain ints in [0, 0xFFFF]: 1 sign, 5 exponent, 10 mantissa bits.
All arithmetic is done exactly on integers and rounded once to nearest-even,
independent of the host FPU and of numpy. Every finite binary16 is an integer
multiple of 2^-24, which makes exact add/mul/div/sqrt straightforward with
Python bigints.

Special-value policy: arithmetic ops (add, sub, mul, div, sqrt, max2) return
the canonical quiet NaN 0x7E00 whenever any NaN is involved; neg and abs are
sign-bit operations and pass NaN payloads through untouched.
"""

from __future__ import annotations

import enum
import math
import struct

SIGN_MASK = 0x8000
EXP_MASK = 0x7C00
FRAC_MASK = 0x03FF
FRAC_BITS = 10
EXP_BIAS = 15

POS_ZERO = 0x0000
NEG_ZERO = 0x8000
ONE = 0x3C00
POS_INF = 0x7C00
NEG_INF = 0xFC00
QNAN = 0x7E00

MAX_FINITE_BITS = 0x7BFF
MAX_FINITE = 65504.0
MIN_NORMAL_BITS = 0x0400
MIN_NORMAL = 2.0**-14
MIN_SUBNORMAL_BITS = 0x0001
MIN_SUBNORMAL = 2.0**-24
# magnitudes at or above this round to inf; below 2^-25 they round to zero
OVERFLOW_THRESHOLD = 65520.0


class FpClass(enum.Enum):
    ZERO = "zero"
    SUBNORMAL = "subnormal"
    NORMAL = "normal"
    INF = "inf"
    NAN = "nan"


def _check(a: int) -> int:
    if not isinstance(a, int) or not 0 <= a <= 0xFFFF:
        raise ValueError(f"not a binary16 bit pattern: {a!r}")
    return a


def decode(a: int) -> tuple[int, int, int]:
    """Split a pattern into (sign, exponent field, fraction field)."""
    _check(a)
    return a >> 15, (a >> 10) & 0x1F, a & FRAC_MASK


def encode(sign: int, exp: int, frac: int) -> int:
    """Inverse of decode; fields must be in range."""
    if sign not in (0, 1) or not 0 <= exp <= 31 or not 0 <= frac <= FRAC_MASK:
        raise ValueError("field out of range")
    return (sign << 15) | (exp << 10) | frac


def is_nan(a: int) -> bool:
    _check(a)
    return (a & 0x7FFF) > EXP_MASK


def is_inf(a: int) -> bool:
    _check(a)
    return (a & 0x7FFF) == EXP_MASK


def is_finite(a: int) -> bool:
    return not is_nan(a) and not is_inf(a)


def is_zero(a: int) -> bool:
    _check(a)
    return (a & 0x7FFF) == 0


def classify(a: int) -> FpClass:
    s, e, f = decode(a)
    if e == 0x1F:
        return FpClass.NAN if f else FpClass.INF
    if e == 0:
        return FpClass.SUBNORMAL if f else FpClass.ZERO
    return FpClass.NORMAL


def _sig24(e: int, f: int) -> int:
    """Integer significand at scale 2^-24 for a finite pattern."""
    if e == 0:
        return f
    return (f | 0x400) << (e - 1)


def to_float(a: int) -> float:
    """Exact decode to a Python float (every finite binary16 is exact in F64)."""
    s, e, f = decode(a)
    if e == 0x1F:
        if f:
            return math.nan
        return -math.inf if s else math.inf
    v = math.ldexp(_sig24(e, f), -24)
    return -v if s else v


def _round_pack(sign: int, k: int, p: int, sticky: bool = False) -> int:
    """Round (-1)^sign * (k + tail) * 2^p to nearest-even binary16 bits,
    where k >= 0 is exact and 0 <= tail < 1 with tail > 0 iff sticky."""
    if k == 0:
        # call sites only produce k == 0 for exact zeros
        return sign << 15
    e_floor = k.bit_length() - 1 + p  # floor(log2 magnitude); tail can't bump it
    grid = -24 if e_floor < -14 else e_floor - 10
    d = grid - p
    if d <= 0:
        # already on (or finer than) the target grid: exact
        j = k << -d
        assert not sticky
    else:
        rem = k & ((1 << d) - 1)
        j = k >> d
        half = 1 << (d - 1)
        if rem > half or (rem == half and (sticky or (j & 1))):
            j += 1
    if grid == -24:
        # subnormal grid; j == 1024 carries into the min-normal pattern
        return (sign << 15) | j
    if j == 2048:  # rounding carried to the next binade
        j = 1024
        e_floor += 1
    if e_floor > 15:
        return (sign << 15) | POS_INF
    return (sign << 15) | ((e_floor + EXP_BIAS) << 10) | (j - 1024)


def from_real(x) -> int:
    """Round a real number (anything float() accepts) to binary16, RNE.
    Total: NaN -> canonical NaN, out-of-range -> +-inf, tiny -> +-0."""
    b = struct.unpack("<Q", struct.pack("<d", float(x)))[0]
    s = b >> 63
    e = (b >> 52) & 0x7FF
    f = b & ((1 << 52) - 1)
    if e == 0x7FF:
        return QNAN if f else (s << 15) | POS_INF
    if e == 0:
        if f == 0:
            return s << 15
        return _round_pack(s, f, -1074)
    return _round_pack(s, f | (1 << 52), e - 1075)


def neg(a: int) -> int:
    """Sign-bit flip; NaN payloads pass through."""
    _check(a)
    return a ^ SIGN_MASK


def absolute(a: int) -> int:
    """Sign-bit clear; NaN payloads pass through."""
    _check(a)
    return a & 0x7FFF


def add(a: int, b: int) -> int:
    if is_nan(a) or is_nan(b):
        return QNAN
    sa, ea, fa = decode(a)
    sb, eb, fb = decode(b)
    if ea == 0x1F or eb == 0x1F:  # at least one inf
        if ea == 0x1F and eb == 0x1F:
            return a if sa == sb else QNAN
        return a if ea == 0x1F else b
    ka = _sig24(ea, fa)
    kb = _sig24(eb, fb)
    if ka == 0 and kb == 0:
        # sum of zeros keeps the sign only when both agree
        return (sa & sb) << 15
    t = (-ka if sa else ka) + (-kb if sb else kb)
    if t == 0:
        return POS_ZERO  # exact cancellation is +0 under RNE
    return _round_pack(1 if t < 0 else 0, abs(t), -24)


def sub(a: int, b: int) -> int:
    return add(a, neg(b))


def mul(a: int, b: int) -> int:
    if is_nan(a) or is_nan(b):
        return QNAN
    sa, ea, fa = decode(a)
    sb, eb, fb = decode(b)
    s = sa ^ sb
    if ea == 0x1F or eb == 0x1F:
        other_zero = (eb != 0x1F and _sig24(eb, fb) == 0) or (
            ea != 0x1F and _sig24(ea, fa) == 0
        )
        if other_zero:
            return QNAN  # inf * 0
        return (s << 15) | POS_INF
    return _round_pack(s, _sig24(ea, fa) * _sig24(eb, fb), -48)


def div(a: int, b: int) -> int:
    if is_nan(a) or is_nan(b):
        return QNAN
    sa, ea, fa = decode(a)
    sb, eb, fb = decode(b)
    s = sa ^ sb
    if ea == 0x1F:
        if eb == 0x1F:
            return QNAN  # inf / inf
        return (s << 15) | POS_INF
    if eb == 0x1F:
        return s << 15  # finite / inf
    ka = _sig24(ea, fa)
    kb = _sig24(eb, fb)
    if kb == 0:
        return QNAN if ka == 0 else (s << 15) | POS_INF  # 0/0 vs x/0
    if ka == 0:
        return s << 15
    q, rem = divmod(ka << 40, kb)
    return _round_pack(s, q, -40, sticky=rem != 0)


def sqrt(a: int) -> int:
    if is_nan(a):
        return QNAN
    s, e, f = decode(a)
    if e != 0x1F and _sig24(e, f) == 0:
        return a  # sqrt(+-0) = +-0
    if s:
        return QNAN  # negative, including -inf
    if e == 0x1F:
        return POS_INF
    k = _sig24(e, f) << 40
    r = math.isqrt(k)
    return _round_pack(0, r, -32, sticky=r * r != k)


def _order_key(a: int) -> int:
    mag = a & 0x7FFF
    return -mag if a >> 15 else mag  # both zeros map to 0


def compare(a: int, b: int):
    """-1, 0, or 1; None when unordered (any NaN)."""
    if is_nan(a) or is_nan(b):
        return None
    ka, kb = _order_key(a), _order_key(b)
    return (ka > kb) - (ka < kb)


def max2(a: int, b: int) -> int:
    """Numerically larger operand; NaN-propagating (never heals a NaN),
    first operand wins on equality (observable with signed zeros)."""
    if is_nan(a) or is_nan(b):
        return QNAN
    return a if _order_key(a) >= _order_key(b) else b
