"""SGD, RMSProp and Adam as pure state transitions in the model's scalar kind.

Every arithmetic step rounds in S (numpy ufuncs on the kind's dtype; see the
tensor module for why that equals true binary16 semantics). The evaluation
order inside each update is pinned and load-bearing in F16:

    quotient = m_hat / denominator   (this is where 1/eps overflows)
    update   = eta * quotient
    w'       = w - update

Multiplying by eta first would mask the overflow the unguarded denominator
produces; keeping the quotient explicit reproduces it faithfully.

The guarded variants replace sqrt(v)+eps with sqrt(max(v, floor)): max is
NaN-propagating (a poisoned v is never healed) and the floor defaults to the
run's epsilon. Bias-correction powers beta^t are computed by t sequential
multiplies in S, memoized per (dtype, beta) so cost stays linear in t while
results remain identical no matter the call order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import Kind, Tensor

ALGOS = ("sgd", "rmsprop", "adam")


@dataclass(frozen=True)
class HyperParams:
    eta: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999  # RMSProp reads its single beta from here (default 0.9 via CLI)
    epsilon: float = 1e-7
    loss_scale: float = 1.0
    guard: bool = False
    guard_floor: Optional[float] = None  # None: the guard floors at epsilon

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.loss_scale >= 1:
            raise ValueError("loss_scale must be >= 1")
        if self.guard_floor is not None and not self.guard_floor > 0:
            raise ValueError("guard_floor must be positive")

    @property
    def floor(self) -> float:
        return self.epsilon if self.guard_floor is None else self.guard_floor


@dataclass(frozen=True)
class OptimState:
    m: Optional[list]  # list[Tensor], Adam only
    v: Optional[list]  # list[Tensor], RMSProp + Adam
    t: int


def init_state(params: list, algo: str) -> OptimState:
    if algo not in ALGOS:
        raise ValueError(f"unknown optimizer {algo!r}")
    kind = params[0].kind
    zeros = lambda: [T.zeros(p.shape, kind) for p in params]
    if algo == "sgd":
        return OptimState(None, None, 0)
    if algo == "rmsprop":
        return OptimState(None, zeros(), 0)
    return OptimState(zeros(), zeros(), 0)


def _congruent(params: list, others: list, what: str) -> None:
    if others is None or len(others) != len(params) or any(
        p.shape != o.shape or p.kind is not o.kind for p, o in zip(params, others)
    ):
        raise ValueError(f"{what} not shape-congruent with params")


_POW_CACHE: dict = {}


def beta_power(kind: Kind, beta: float, t: int) -> float:
    """beta^t evaluated by t sequential multiplies in S (not exponentiation);
    returns the S value as a float. Memoized incrementally per (kind, beta)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    dtype = kind.dtype
    b = dtype.type(beta)
    key = (dtype.str, b.tobytes())
    chain = _POW_CACHE.setdefault(key, [b])
    with np.errstate(all="ignore"):
        while len(chain) < t:
            chain.append(dtype.type(chain[-1] * b))
    return float(chain[t - 1])


def sgd_step(params: list, grads: list, hp: HyperParams) -> list:
    """w' = w - round(eta*g), each op rounded in S."""
    _congruent(params, grads, "grads")
    kind = params[0].kind
    eta = kind.dtype.type(hp.eta)
    out = []
    with np.errstate(all="ignore"):
        for w, g in zip(params, grads):
            u = g.data * eta
            out.append(T._wrap(w.data - u, kind))
    return out


def _denominator(v: np.ndarray, hp: HyperParams, dtype) -> np.ndarray:
    """sqrt(v)+eps, or sqrt(max(v, floor)) when guarded."""
    with np.errstate(all="ignore"):
        if hp.guard:
            floored = np.maximum(v, dtype.type(hp.floor))  # NaN propagates
            return np.sqrt(floored)
        return np.sqrt(v) + dtype.type(hp.epsilon)


def rmsprop_step(params: list, grads: list, state: OptimState, hp: HyperParams):
    """v' = beta*v + (1-beta)*g^2; w' = w - eta*(g/den). beta is hp.beta2."""
    _congruent(params, grads, "grads")
    _congruent(params, state.v, "state.v")
    kind = params[0].kind
    dtype = kind.dtype
    with np.errstate(all="ignore"):
        beta = dtype.type(hp.beta2)
        one_minus = dtype.type(1) - beta
        eta = dtype.type(hp.eta)
        new_v, new_w = [], []
        for w, g, v in zip(params, grads, state.v):
            g2 = g.data * g.data
            v1 = v.data * beta + g2 * one_minus
            den = _denominator(v1, hp, dtype)
            q = g.data / den
            u = q * eta
            new_w.append(T._wrap(w.data - u, kind))
            new_v.append(T._wrap(v1, kind))
    return new_w, OptimState(None, new_v, state.t + 1)


def _adam_moments(grads: list, state: OptimState, hp: HyperParams, kind: Kind):
    """The first phase of an Adam step: m', v', m_hat, v_hat (all in S) for
    step number t+1. Shared with the assumption checkers so the predicate
    sees exactly what the step computes."""
    dtype = kind.dtype
    t_next = state.t + 1
    with np.errstate(all="ignore"):
        b1 = dtype.type(hp.beta1)
        b2 = dtype.type(hp.beta2)
        om1 = dtype.type(1) - b1
        om2 = dtype.type(1) - b2
        bc1 = dtype.type(1) - dtype.type(beta_power(kind, hp.beta1, t_next))
        bc2 = dtype.type(1) - dtype.type(beta_power(kind, hp.beta2, t_next))
        out = []
        for g, m, v in zip(grads, state.m, state.v):
            m1 = m.data * b1 + g.data * om1
            g2 = g.data * g.data
            v1 = v.data * b2 + g2 * om2
            m_hat = m1 / bc1
            v_hat = v1 / bc2
            out.append((m1, v1, m_hat, v_hat))
    return out, t_next


def adam_step(params: list, grads: list, state: OptimState, hp: HyperParams):
    _congruent(params, grads, "grads")
    _congruent(params, state.m, "state.m")
    _congruent(params, state.v, "state.v")
    kind = params[0].kind
    dtype = kind.dtype
    moments, t_next = _adam_moments(grads, state, hp, kind)
    with np.errstate(all="ignore"):
        eta = dtype.type(hp.eta)
        new_m, new_v, new_w = [], [], []
        for w, (m1, v1, m_hat, v_hat) in zip(params, moments):
            den = _denominator(v_hat, hp, dtype)
            q = m_hat / den
            u = q * eta
            new_w.append(T._wrap(w.data - u, kind))
            new_m.append(T._wrap(m1, kind))
            new_v.append(T._wrap(v1, kind))
    return new_w, OptimState(new_m, new_v, t_next)


def step(algo: str, params: list, grads: list, state: OptimState, hp: HyperParams):
    """Uniform entry point: returns (params', state') for any optimizer."""
    if algo == "sgd":
        return sgd_step(params, grads, hp), replace(state, t=state.t + 1)
    if algo == "rmsprop":
        return rmsprop_step(params, grads, state, hp)
    if algo == "adam":
        return adam_step(params, grads, state, hp)
    raise ValueError(f"unknown optimizer {algo!r}")


def scaled_backward(loss_scale: float, backward_fn):
    """Loss-scaling wrapper. backward_fn(scale) must run the backward pass
    with the loss multiplied by scale and return (loss, Gradients); the
    wrapper unscales every gradient by round_S(1/scale) in S.
    """
    if not loss_scale >= 1:
        raise ValueError("loss_scale must be >= 1")
    loss, grads = backward_fn(float(loss_scale))
    from . import nn  # local import: optim is otherwise nn-agnostic

    kind = grads.weights[0].kind
    inv = kind.dtype.type(1.0 / float(loss_scale))
    with np.errstate(all="ignore"):
        gws = [T._wrap(g.data * inv, kind) for g in grads.weights]
        gbs = [T._wrap(g.data * inv, kind) for g in grads.biases]
    return loss, nn._grads_with_stats(gws, gbs)
