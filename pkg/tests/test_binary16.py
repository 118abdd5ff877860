import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stable16 import binary16 as b16
from stable16 import conformance


def bits_of(x: float) -> int:
    return int(np.float64(x).astype(np.float16).view(np.uint16))


class TestRounding:
    def test_zero_exact(self):
        assert b16.from_real(0.0) == b16.POS_ZERO
        assert b16.from_real(-0.0) == b16.NEG_ZERO

    def test_max_finite_no_overflow(self):
        assert b16.from_real(65504.0) == b16.MAX_FINITE_BITS

    def test_overflow_threshold(self):
        assert b16.from_real(65519.999) == b16.MAX_FINITE_BITS
        assert b16.from_real(65520.0) == b16.POS_INF  # tie rounds to even=inf
        assert b16.from_real(-65520.0) == b16.NEG_INF
        assert b16.from_real(1e300) == b16.POS_INF

    def test_underflow_threshold(self):
        assert b16.from_real(2.0**-25) == b16.POS_ZERO  # tie to even
        assert b16.from_real(2.0**-25 * (1 + 2.0**-40)) == b16.MIN_SUBNORMAL_BITS
        assert b16.from_real(-(2.0**-25)) == b16.NEG_ZERO
        assert b16.from_real(5e-324) == b16.POS_ZERO

    def test_eps_default_is_subnormal(self):
        e = b16.from_real(1e-7)
        assert b16.classify(e) is b16.FpClass.SUBNORMAL
        assert b16.to_float(e) > 0

    def test_ties_to_even_mantissa(self):
        assert b16.from_real(1.0 + 2.0**-11) == b16.ONE  # down to even
        assert b16.from_real(1.0 + 3 * 2.0**-11) == 0x3C02  # up to even

    def test_specials(self):
        assert b16.from_real(math.inf) == b16.POS_INF
        assert b16.from_real(-math.inf) == b16.NEG_INF
        assert b16.from_real(math.nan) == b16.QNAN

    def test_roundtrip_all_non_nan_patterns(self):
        # every finite/inf binary16 is exact in float64, so the roundtrip
        # through to_float must reproduce the bits, signed zeros included
        for a in range(65536):
            if b16.is_nan(a):
                continue
            assert b16.from_real(b16.to_float(a)) == a

    def test_decode_encode_identity(self):
        for a in range(65536):
            assert b16.encode(*b16.decode(a)) == a

    @given(st.floats(allow_nan=False), st.floats(allow_nan=False))
    @settings(max_examples=300)
    def test_rounding_monotone(self, x, y):
        if x > y:
            x, y = y, x
        assert b16.compare(b16.from_real(x), b16.from_real(y)) <= 0


class TestArithmetic:
    def test_div_one_by_eps_overflows(self):
        assert b16.div(b16.ONE, b16.from_real(1e-7)) == b16.POS_INF

    def test_inf_minus_inf_is_nan(self):
        assert b16.sub(b16.POS_INF, b16.POS_INF) == b16.QNAN

    def test_mul_identity_exhaustive(self):
        for a in range(65536):
            if b16.is_finite(a):
                assert b16.mul(b16.ONE, a) == a

    def test_signed_zero_sums(self):
        assert b16.add(b16.POS_ZERO, b16.NEG_ZERO) == b16.POS_ZERO
        assert b16.add(b16.NEG_ZERO, b16.NEG_ZERO) == b16.NEG_ZERO
        one = b16.ONE
        assert b16.add(one, b16.neg(one)) == b16.POS_ZERO

    def test_div_special_rules(self):
        assert b16.div(b16.ONE, b16.POS_ZERO) == b16.POS_INF
        assert b16.div(b16.neg(b16.ONE), b16.POS_ZERO) == b16.NEG_INF
        assert b16.div(b16.POS_ZERO, b16.POS_ZERO) == b16.QNAN
        assert b16.div(b16.POS_INF, b16.POS_INF) == b16.QNAN
        assert b16.div(b16.ONE, b16.POS_INF) == b16.POS_ZERO

    def test_sqrt_specials(self):
        assert b16.sqrt(b16.POS_ZERO) == b16.POS_ZERO
        assert b16.sqrt(b16.NEG_ZERO) == b16.NEG_ZERO
        assert b16.sqrt(b16.neg(b16.ONE)) == b16.QNAN
        assert b16.sqrt(b16.POS_INF) == b16.POS_INF

    def test_nan_payload_rules(self):
        payload = 0x7E01
        assert b16.add(payload, b16.ONE) == b16.QNAN  # arithmetic canonicalizes
        assert b16.neg(payload) == 0xFE01  # sign-bit ops pass payloads through
        assert b16.absolute(0xFE01) == 0x7E01

    @given(st.integers(0, 65535), st.integers(0, 65535))
    @settings(max_examples=300)
    def test_add_commutes(self, a, b):
        assert b16.add(a, b) == b16.add(b, a)

    def test_rejects_non_patterns(self):
        with pytest.raises(ValueError):
            b16.add(-1, 0)
        with pytest.raises(ValueError):
            b16.add(0x10000, 0)
        with pytest.raises(ValueError):
            b16.classify(1.5)


class TestCompareMax:
    def test_compare_orders(self):
        assert b16.compare(b16.ONE, b16.from_real(2.0)) == -1
        assert b16.compare(b16.from_real(-1.0), b16.ONE) == -1
        assert b16.compare(b16.POS_ZERO, b16.NEG_ZERO) == 0
        assert b16.compare(b16.POS_INF, b16.MAX_FINITE_BITS) == 1

    def test_compare_unordered(self):
        assert b16.compare(b16.QNAN, b16.QNAN) is None
        assert b16.compare(b16.QNAN, b16.ONE) is None

    def test_max2_decision_table(self):
        one, two = b16.ONE, b16.from_real(2.0)
        assert b16.max2(one, two) == two
        assert b16.max2(two, one) == two
        assert b16.max2(one, one) == one
        assert b16.max2(b16.POS_ZERO, b16.from_real(1e-4)) == b16.from_real(1e-4)
        # ties: first operand wins (visible with signed zeros)
        assert b16.max2(b16.NEG_ZERO, b16.POS_ZERO) == b16.NEG_ZERO
        assert b16.max2(b16.POS_ZERO, b16.NEG_ZERO) == b16.POS_ZERO
        # NaN propagates, never healed
        assert b16.max2(b16.QNAN, b16.ONE) == b16.QNAN
        assert b16.max2(b16.ONE, b16.QNAN) == b16.QNAN
        assert b16.max2(b16.QNAN, b16.POS_INF) == b16.QNAN


class TestConformanceSample:
    """Small randomized slices; the full >=1e6-per-op run is in acceptance."""

    @pytest.mark.parametrize("op", conformance.UNARY_OPS)
    def test_unary_exhaustive(self, op):
        rep = conformance.run_unary(op)
        assert rep.ok, rep.examples

    @pytest.mark.parametrize("op", conformance.BINARY_OPS)
    def test_binary_sample(self, op):
        rep = conformance.run_binary(op, cases=20000, seed=7)
        assert rep.ok, rep.examples

    def test_from_real_sample(self):
        rep = conformance.run_from_real(cases=20000, seed=11)
        assert rep.ok, rep.examples

    def test_fault_injection_is_detected(self):
        rep = conformance.run_binary("add", cases=2000, seed=3,
                                     fault=lambda bits: bits ^ 0x0001)
        assert rep.mismatches > 0
        assert rep.examples  # mismatching bit patterns are reported
