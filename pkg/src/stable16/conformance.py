"""Binary16 conformance: the integer softfloat reference checked against an
independent oracle that computes each operation in float64 and rounds once.

The oracle is valid because float64 carries 53 significand bits, more than
double binary16's 11, so for +,-,*,/ and sqrt the double rounding
(to f64, then to f16) always lands on the correctly rounded binary16 result.

NaN results are compared after canonicalization (payload and sign of NaN are
not semantics the scalar module promises); neg/abs are sign-bit operations
and must match bit-for-bit including payloads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import binary16 as b16

UNARY_OPS = ("sqrt", "neg", "abs", "classify")
BINARY_OPS = ("add", "sub", "mul", "div", "max2")


@dataclass
class OpReport:
    op: str
    cases: int
    mismatches: int
    examples: list = field(default_factory=list)  # (operand bits..., got, want)

    @property
    def ok(self) -> bool:
        return self.mismatches == 0


def _f16_view(bits: np.ndarray) -> np.ndarray:
    return np.asarray(bits, dtype="<u2").view(np.float16)


def _canon_nan(bits: np.ndarray) -> np.ndarray:
    out = np.asarray(bits, dtype=np.uint16).copy()
    out[np.isnan(_f16_view(out))] = np.uint16(b16.QNAN)
    return out


def _oracle_unary(op: str, bits: np.ndarray):
    v16 = _f16_view(bits)
    if op == "sqrt":
        with np.errstate(invalid="ignore"):
            return np.sqrt(v16.astype(np.float64)).astype(np.float16).view(np.uint16)
    if op == "neg":
        return np.negative(v16).view(np.uint16)
    if op == "abs":
        return np.abs(v16).view(np.uint16)
    if op == "classify":
        # value-based, no bit fiddling: classify through float64 upcast
        v = v16.astype(np.float64)
        out = np.empty(v.shape, dtype=object)
        out[v == 0] = b16.FpClass.ZERO
        out[np.isinf(v)] = b16.FpClass.INF
        out[np.isnan(v)] = b16.FpClass.NAN
        small = np.isfinite(v) & (v != 0) & (np.abs(v) < 2.0**-14)
        out[small] = b16.FpClass.SUBNORMAL
        rest = np.isfinite(v) & (np.abs(v) >= 2.0**-14)
        out[rest] = b16.FpClass.NORMAL
        return out
    raise ValueError(f"unknown unary op {op!r}")


def _oracle_binary(op: str, a_bits: np.ndarray, b_bits: np.ndarray) -> np.ndarray:
    a16, b16v = _f16_view(a_bits), _f16_view(b_bits)
    if op == "max2":
        with np.errstate(invalid="ignore"):
            return np.maximum(a16, b16v).view(np.uint16)
    a, b = a16.astype(np.float64), b16v.astype(np.float64)
    with np.errstate(all="ignore"):
        if op == "add":
            r = a + b
        elif op == "sub":
            r = a - b
        elif op == "mul":
            r = a * b
        elif op == "div":
            r = a / b
        else:
            raise ValueError(f"unknown binary op {op!r}")
        return r.astype(np.float16).view(np.uint16)


_IMPL_UNARY = {"sqrt": b16.sqrt, "neg": b16.neg, "abs": b16.absolute,
               "classify": b16.classify}
_IMPL_BINARY = {"add": b16.add, "sub": b16.sub, "mul": b16.mul, "div": b16.div,
                "max2": b16.max2}


def run_unary(op: str, fault=None, max_examples: int = 5) -> OpReport:
    """Exhaustive check of a unary op over all 65536 bit patterns."""
    bits = np.arange(65536, dtype=np.uint16)
    want = _oracle_unary(op, bits)
    impl = _IMPL_UNARY[op]
    got = [impl(int(x)) for x in bits]
    if fault is not None and op != "classify":  # fault hook mutates bit results
        got = [fault(g) for g in got]
    if op == "classify":
        bad = [i for i in range(65536) if got[i] is not want[i]]
    else:
        got_arr = np.asarray(got, dtype=np.uint16)
        if op == "sqrt":  # arithmetic: NaN payload not compared
            got_arr, want = _canon_nan(got_arr), _canon_nan(want)
        bad = np.nonzero(got_arr != want)[0].tolist()
    examples = [
        (int(bits[i]), int(got[i]) if op != "classify" else str(got[i]),
         int(want[i]) if op != "classify" else str(want[i]))
        for i in bad[:max_examples]
    ]
    return OpReport(op, 65536, len(bad), examples)


def run_binary(op: str, cases: int, seed: int, fault=None,
               max_examples: int = 5) -> OpReport:
    """Randomized check of a binary op over `cases` uniform bit-pattern pairs."""
    gen = np.random.Generator(np.random.PCG64(seed))
    a_bits = gen.integers(0, 65536, size=cases, dtype=np.uint16)
    b_bits = gen.integers(0, 65536, size=cases, dtype=np.uint16)
    want = _canon_nan(_oracle_binary(op, a_bits, b_bits))
    impl = _IMPL_BINARY[op]
    if fault is None:
        got = [impl(int(x), int(y)) for x, y in zip(a_bits, b_bits)]
    else:
        got = [fault(impl(int(x), int(y))) for x, y in zip(a_bits, b_bits)]
    got = _canon_nan(np.asarray(got, dtype=np.uint16))
    bad = np.nonzero(got != want)[0].tolist()
    examples = [
        (int(a_bits[i]), int(b_bits[i]), int(got[i]), int(want[i]))
        for i in bad[:max_examples]
    ]
    return OpReport(op, cases, len(bad), examples)


def run_from_real(cases: int, seed: int, fault=None, max_examples: int = 5) -> OpReport:
    """from_real vs numpy's float64->float16 cast on random doubles spanning
    the full exponent range, plus a dense band around rounding boundaries."""
    gen = np.random.Generator(np.random.PCG64(seed))
    mant = gen.uniform(-2.0, 2.0, size=cases)
    expo = gen.integers(-30, 20, size=cases)
    xs = np.ldexp(mant, expo)
    # exact binary16 midpoints and tiny offsets around them
    grid = np.arange(1, 2048, dtype=np.float64)
    mids = np.concatenate([(grid + 0.5) * 2.0**-24,
                           (grid + 0.5) * 2.0**-10,
                           (grid + 0.5) * 2.0**5])
    eps = np.array([0.0, 2.0**-40, -(2.0**-40)])
    xs = np.concatenate([xs, (mids[:, None] * (1.0 + eps[None, :])).ravel(),
                         [0.0, -0.0, np.inf, -np.inf, np.nan,
                          65519.9999, 65520.0, 65520.0001, 2.0**-25, -(2.0**-25)]])
    with np.errstate(all="ignore"):
        want = _canon_nan(xs.astype(np.float16).view(np.uint16))
    got = [b16.from_real(float(x)) for x in xs]
    if fault is not None:
        got = [fault(g) for g in got]
    got = _canon_nan(np.asarray(got, dtype=np.uint16))
    bad = np.nonzero(got != want)[0].tolist()
    examples = [(float(xs[i]), int(got[i]), int(want[i])) for i in bad[:max_examples]]
    return OpReport("from_real", len(xs), len(bad), examples)


def run_suite(binary_cases: int = 1_000_000, seed: int = 2024,
              fault=None) -> list[OpReport]:
    """The full conformance suite: exhaustive unary + randomized binary ops."""
    reports = [run_unary(op, fault=fault) for op in UNARY_OPS]
    for i, op in enumerate(BINARY_OPS):
        reports.append(run_binary(op, binary_cases, seed + i, fault=fault))
    reports.append(run_from_real(max(binary_cases // 10, 1000), seed + 99,
                                 fault=fault))
    return reports
