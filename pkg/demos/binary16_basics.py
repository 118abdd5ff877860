"""A tour of the binary16 softfloat: bit layout, rounding, and the edges.

Every value the trainer touches is one of 65536 bit patterns. This walks
the interesting ones: subnormals (where 1e-7 lives), round-to-nearest-even,
and the overflow threshold at 65520.
"""
import numpy as np

from stable16 import binary16 as b16
from stable16 import tensor as T
from stable16.tensor import Kind


def show(label, bits):
    print(f"  {label:34s} bits=0x{bits:04X}  value={b16.to_float(bits)!r}")


print("landmark bit patterns")
show("one", b16.from_real(1.0))
show("largest finite (65504)", b16.from_real(65504.0))
show("smallest normal (2^-14)", b16.from_real(2.0 ** -14))
show("smallest subnormal (2^-24)", b16.from_real(2.0 ** -24))
show("epsilon 1e-7 (a subnormal!)", b16.from_real(1e-7))
show("epsilon 1e-4", b16.from_real(1e-4))

print("\nround-to-nearest-even at a midpoint")
# 2049 sits exactly between representable 2048 and 2050: tie goes to even
show("2048", b16.from_real(2048.0))
show("2049 (midpoint, ties-to-even)", b16.from_real(2049.0))
show("2051 (midpoint, even is 2052)", b16.from_real(2051.0))

print("\nthe overflow cliff")
show("65519.9 rounds back to 65504", b16.from_real(65519.9))
show("65520.0 rounds to +inf", b16.from_real(65520.0))

print("\nunderflow to zero")
show("2^-25 (half the smallest step)", b16.from_real(2.0 ** -25))
show("2^-25 * 1.0001 -> smallest sub", b16.from_real(2.0 ** -25 * 1.0001))

print("\narithmetic rounds once per operation")
a, c = b16.from_real(1.0), b16.from_real(2.0 ** -11)
s1 = b16.add(a, c)
show("1 + 2^-11 (exact midpoint: even)", s1)
s2 = b16.add(a, b16.from_real(2.0 ** -11 + 2.0 ** -20))
show("1 + (2^-11 + 2^-20)", s2)

print("\nepsilon's reciprocal is the whole story")
eps = b16.from_real(1e-7)
one = b16.from_real(1.0)
show("1 / 1e-7 overflows", b16.div(one, eps))
g = b16.from_real(0.01)
show("0.01 / 1e-7 overflows too", b16.div(g, eps))
print("  ... which is exactly what lands in the weights when an optimizer")
print("  divides by sqrt(v_hat) + eps after v_hat flushed to zero.")

print("\nthe same ops, vectorized through the tensor layer")
x = T.make(np.array([1e-7, 2.0 ** -24, 65504.0, 0.01]), Kind.F16)
print("  round-once values:", x.data)
print("  as bit patterns:  ",
      [hex(v) for v in x.data.view(np.uint16)])
