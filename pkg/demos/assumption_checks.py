"""Predicates that certify an optimizer step before you take it.

check_assumption() evaluates a per-element sufficiency condition on a
snapshot (params, grads, state, hyperparams): if it holds, the step cannot
mint a new inf or NaN. When it fails it names the first offending element,
the reason, and the bit patterns, which turns "my loss went NaN" into a
one-line diagnosis. predict_then_observe() is the built-in honesty check:
evaluate the predicate, run the real step, count fresh specials.
"""
import numpy as np

from stable16 import optim
from stable16 import stability
from stable16 import tensor as T
from stable16.tensor import Kind

F16 = Kind.F16


def verdict(label, res):
    if res.holds:
        print(f"  {label}: holds")
    else:
        bits = {k: v for k, v in res.detail.items() if k.endswith("_bits")}
        print(f"  {label}: FAILS  reason: {res.reason}")
        print(f"      element {res.detail['index']} of tensor {res.detail['tensor']}, bits {bits}")


w = [T.make([0.02, -0.04, 0.01], F16)]

# --- plain SGD: the only hazard is the update itself --------------------
print("A3.1 (SGD): eta*g and w - eta*g stay finite")
hp = optim.HyperParams(eta=0.1)
healthy = [T.make([1e-3, -2e-3, 5e-4], F16)]
verdict("healthy grads", stability.check_assumption("A3.1", w, healthy, None, hp))
# 60000 * 2 overflows the largest finite half (65504)
hot = [T.make([60000.0, 1e-3, 0.0], F16)]
verdict("|g|=6e4, eta=2", stability.check_assumption(
    "A3.1", w, hot, None, optim.HyperParams(eta=2.0)))

# --- RMSProp: the flushed second moment --------------------------------
print("\nA3.2 (RMSProp): denominator sqrt(v')+eps and quotient in range")
hp = optim.HyperParams(eta=1e-3, beta2=0.9, epsilon=1e-7)
state = optim.init_state(w, "rmsprop")
# |g| = 0.01 is outside the RMSProp flush window (5.5e-4): v' survives
verdict("g=0.01 (v' nonzero)", stability.check_assumption(
    "A3.2", w, [T.make([0.01, 0.01, 0.01], F16)], state, hp))
# |g| = 3e-4 flushes v' to zero, but g/eps ~ 2.5e3 is still finite, so the
# predicate holds; the outsized kick is a health problem, not a specials one
verdict("g=3e-4 (v' flushes, kick finite)", stability.check_assumption(
    "A3.2", w, [T.make([3e-4, 3e-4, 3e-4], F16)], state, hp))
# |g| > sqrt(65504) ~ 256: squaring the gradient overflows before anything
# else gets a say
verdict("g=300 (g*g overflows)", stability.check_assumption(
    "A3.2", w, [T.make([300.0, 0.0, 0.0], F16)], state, hp))

# --- Adam: same shape, bias-corrected ----------------------------------
print("\nA3.3 (Adam): m_hat/(sqrt(v_hat)+eps) in range")
hp = optim.HyperParams(eta=1e-3, epsilon=1e-7)
state = optim.init_state(w, "adam")
g_small = [T.make([1e-3, -1e-3, 2e-3], F16)]
res = stability.check_assumption("A3.3", w, g_small, state, hp)
verdict("fresh state, g~1e-3", res)
print("      (the kick is finite here: |m_hat|/eps ~ 8e3 < 65504, so no new")
print("       specials this step; the damage lands in the next forward pass)")
stuck = optim.OptimState([T.make([0.01, 0.0, 0.0], F16)],
                         [T.zeros((3,), F16)], 0)
verdict("stuck m=0.01, v=0", stability.check_assumption(
    "A3.3", w, g_small, stuck, hp))
# the predicate certifies the active rule: with the guard on, the floored
# denominator defuses the same snapshot and the verdict flips
verdict("same, guard on", stability.check_assumption(
    "A3.3", w, g_small, stuck,
    optim.HyperParams(eta=1e-3, epsilon=1e-7, guard=True)))

# --- predicate versus reality -------------------------------------------
print("\npredict_then_observe: does the verdict match the step?")
cases = [
    ("healthy", state, optim.HyperParams(eta=1e-3, epsilon=1e-4)),
    ("stuck + tiny eps", stuck, optim.HyperParams(eta=1e-3, epsilon=1e-7)),
]
for label, st, hp_i in cases:
    out = stability.predict_then_observe(
        "A3.3", optim.adam_step, w, g_small, st, hp_i)
    print(f"  {label}: predicate holds={out.predicate.holds}, "
          f"step minted {out.new_infs} inf / {out.new_nans} NaN, "
          f"consistent={out.consistent}")

print("""
the contract is one-directional: a holding predicate guarantees a clean
step; a failing one names the first element that voids the guarantee.
RunMonitor evaluates this every training step and records the first
violation in the stability report (see `stable16 analyze`).""")
