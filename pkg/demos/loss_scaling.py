"""Gradient underflow and the power-of-two loss-scale rescue.

Half precision flushes anything below 2^-24 to zero, and real gradients
spend a lot of time down there. Multiplying the loss by a constant before
the backward pass lifts every gradient by that constant; dividing it back
out after recovers the true value. With a power-of-two scale both moves
are exact (they only touch the exponent), so the rescue costs nothing in
accuracy.

This crafts a batch whose true gradients sit at exactly 2^-24: unscaled
F16 backward returns all zeros, scaled backward returns the exact value.
"""
import numpy as np

from stable16 import nn
from stable16 import optim
from stable16 import tensor as T
from stable16.tensor import Kind

F16, F64 = Kind.F16, Kind.F64

# one input feature, two classes, weights zeroed: with x = 2^-23 the
# per-example weight-gradient contribution is +-x/2 / m = 2^-34 for m=1024,
# and the summed gradient is +-2^-24 exactly (every quantity a power of two)
m = 1024
x16 = T.from_bits(np.full((1, m), 0x0002, dtype=np.uint16))  # 2^-23 subnormal
labels = np.zeros(m, dtype=np.int64)


def grads(scale):
    model = nn.init_mlp([1, 2], F16, seed=0)
    zeroed = [T.make(np.zeros_like(p.data, dtype=np.float64), F16)
              for p in model.params()]
    model = model.replace_params(zeroed)
    if scale > 1:
        _, g = optim.scaled_backward(
            scale, lambda s: nn.loss_and_backward(model, x16, labels,
                                                  loss_scale=s))
    else:
        _, g = nn.loss_and_backward(model, x16, labels)
    return g.weights[0].data.ravel()


def bits_of(vals):
    return [f"0x{b:04X}" for b in np.asarray(vals, np.float16).view(np.uint16)]


print("true weight gradient (float64 math): +-2^-24 =", 2.0 ** -24)

plain = grads(1.0)
print("\nunscaled F16 backward")
print(f"  grads = {plain.tolist()}  bits={bits_of(plain)}")
print("  every contribution fell below 2^-24 on the way and flushed; the")
print("  optimizer would see a zero gradient and learn nothing.")

rescued = grads(1024.0)
print("\nscaled F16 backward (loss_scale=1024, a power of two)")
print(f"  grads = {rescued.tolist()}  bits={bits_of(rescued)}")
print(f"  exact: |g| == 2^-24 is {bool(np.all(np.abs(rescued) == 2.0 ** -24))}")

# powers of two shift exponents without touching significands, so scaling
# and unscaling round-trip exactly for any representable value
print("\nwhy a power of two: scale * value / scale is bit-exact")
rng = np.random.default_rng(11)
vals = np.float16(rng.normal(scale=0.05, size=8))
for scale in (1024.0, 1000.0):
    up = np.float16(vals * np.float16(scale))
    back = np.float16(up * np.float16(1.0 / scale))
    same = int((back == vals).sum())
    print(f"  scale={scale:6.0f}: {same}/8 values survive the round trip")

# a non-power-of-two scale re-rounds twice; usually close, never guaranteed
print("""
pick the scale like the trainer does: large enough to lift the smallest
gradient above 2^-24, small enough that the largest stays under 65504.
RunConfig(loss_scale=...) applies exactly this wrapper around backward.""")
