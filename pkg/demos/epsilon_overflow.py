"""Why a tiny epsilon wrecks 16-bit Adam: the whole chain on one weight.

The failure needs three links, each ordinary on its own:
  1. a modest gradient whose square, times (1 - beta2), underflows to zero,
  2. a second moment stuck at zero, so the denominator is bare epsilon,
  3. a quotient m_hat / epsilon that dwarfs the weight (or overflows outright).
Flooring the variance (sqrt(max(v_hat, eps)) instead of sqrt(v_hat) + eps)
breaks link 3 without touching healthy elements.
"""
import numpy as np

from stable16 import binary16 as b16
from stable16 import optim
from stable16 import stability
from stable16 import tensor as T
from stable16.tensor import Kind

F16 = Kind.F16


def f16(x):
    return float(np.float16(x))


def hexbits(x):
    with np.errstate(all="ignore"):
        return f"0x{int(np.float16(x).view(np.uint16)):04X}"


# --- link 1: the flush window ------------------------------------------
g = 1e-3  # a perfectly reasonable gradient
beta2 = 0.999
g2 = b16.mul(b16.from_real(g), b16.from_real(g))
print("link 1: g^2 * (1 - beta2) underflows")
print(f"  g        = {g}  ({hexbits(g)})")
print(f"  g*g      = {b16.to_float(g2)!r}  (survives: still above 2^-24)")
scaled = b16.mul(g2, b16.from_real(1.0 - beta2))
print(f"  * 0.001  = {b16.to_float(scaled)!r}  ({hexbits(b16.to_float(scaled))})")
# the window: g^2 (1-beta2) < 2^-25 whenever |g| < sqrt(2^-25 / (1-beta2))
window = float(np.sqrt(2.0 ** -25 / (1.0 - beta2)))
print(f"  every |g| < {window:.2e} flushes this way (RMSProp beta=0.9: {float(np.sqrt(2.0 ** -25 / 0.1)):.2e})")

# --- links 2+3: one Adam step on a single weight -----------------------
w = T.make([0.02], F16)           # a typical freshly-initialized weight
grad = T.make([g], F16)
state = optim.init_state([w], "adam")
hp = optim.HyperParams(eta=1e-3, epsilon=1e-7)

moments, _ = optim._adam_moments([grad], state, hp, F16)
m1, v1, m_hat, v_hat = (arr.item() for arr in moments[0])
print("\nlinks 2+3: the first step (eta=1e-3, eps=1e-7)")
print(f"  m_hat = {m_hat:.6g}   (bias correction makes m_hat = g at t=1)")
print(f"  v_hat = {v_hat!r}     <- the flush from link 1")
print(f"  denom = sqrt(0) + eps = {f16(1e-7):.4g}  ({hexbits(1e-7)}, a subnormal)")

new_w, _ = optim.adam_step([w], [grad], state, hp)
kick = w.data.item() - new_w[0].data.item()
print(f"  update = eta * m_hat/denom = {kick:.4g}")
print(f"  weight: {w.data.item()} -> {new_w[0].data.item():.4g}")
print(f"  one step moved the weight {abs(kick / 0.02):.0f}x its own size.")

# The kick itself is finite, so the specials arrive downstream: a weight in
# the hundreds overflows the next forward pass, and softmax's max-subtraction
# turns two overflowed logits into inf - inf.
inf_bits = b16.from_real(1e6)
print("\nwhere the NaN actually appears")
print(f"  logits past 65504 become inf ({hexbits(1e6)})")
nan_bits = b16.sub(inf_bits, inf_bits)
print(f"  inf - inf = {b16.to_float(nan_bits)!r} ({hexbits(b16.to_float(nan_bits))})  <- softmax does this subtraction")

# --- the predicate sees the stuck moment -------------------------------
# With a larger first moment the quotient overflows inside the optimizer
# itself and the Adam predicate names the cause.
crafted = optim.OptimState([T.make([1e-2], F16)], [T.zeros((1,), F16)], 0)
res = stability.check_assumption("A3.3", [w], [grad], crafted, hp)
print("\nthe sufficiency predicate on a stuck-moment snapshot")
print(f"  holds={res.holds}  reason: {res.reason}")
print(f"  detail: m_hat={res.detail['m_hat']:.4g} ({res.detail['m_hat_bits']})"
      f"  quotient={res.detail['q']!r} ({res.detail['q_bits']})")

# --- the guard, and the epsilon ladder ---------------------------------
print("\nsame snapshot across the epsilon ladder, guarded and not")
print(f"  {'eps':>8s}  {'denom off':>11s}  {'update off':>11s}  {'denom on':>11s}  {'update on':>11s}")
for eps in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
    off = optim.HyperParams(eta=1e-3, epsilon=eps, guard=False)
    on = optim.HyperParams(eta=1e-3, epsilon=eps, guard=True)
    row = []
    for hp_i in (off, on):
        nw, _ = optim.adam_step([w], [grad], state, hp_i)
        den = optim._denominator(np.array([v_hat], dtype=np.float16), hp_i,
                                 np.dtype(np.float16)).item()
        row.append((den, w.data.item() - nw[0].data.item()))
    print(f"  {eps:8.0e}  {row[0][0]:11.4g}  {row[0][1]:11.4g}  {row[1][0]:11.4g}  {row[1][1]:11.4g}")

print("""
reading the table: unguarded updates scale like eta*g/eps and cross from
harmless (1e-2) to weight-destroying (1e-5 and below); the guarded column
scales like eta*g/sqrt(eps) and never leaves sane territory. A fixed floor
(guard_floor=1e-4) pins the denominator at 1e-2 for every epsilon.""")
