"""Numerical-event telemetry and the optimizer sufficiency assumptions as
executable predicates.

Three layers:

- scan_array / scan_tensors: classify elements (zero, subnormal, inf, NaN)
  and track |value| extremes;
- check_assumption / predict_then_observe: the A3.1/A3.2/A3.3 sufficiency
  conditions evaluated on live optimizer snapshots, plus the runtime oracle
  that asserts "predicate holds => the step created no new specials";
- RunMonitor / StabilityReport: per-run accounting of overflow/NaN onset,
  per-epoch gradient magnitude series, and the first assumption violation,
  serializable as JSON for the analyze subcommand.

The A3.2/A3.3 predicates additionally require the update quotient
(|g| or |m_hat| over the denominator) to stay below the overflow threshold;
the denominator bounds alone do not make the no-overflow claim true, and the
quotient is what the no-overflow claim is about.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import optim
from .tensor import Kind, Tensor

ASSUMPTIONS = ("A3.1", "A3.2", "A3.3")
ASSUMPTION_FOR_ALGO = {"sgd": "A3.1", "rmsprop": "A3.2", "adam": "A3.3"}


# ---------------------------------------------------------------- scanning

@dataclass
class ScanCounts:
    zeros: int = 0
    subnormals: int = 0
    infs: int = 0
    nans: int = 0
    total: int = 0
    abs_max: Optional[float] = None  # over finite elements
    abs_min_nonzero: Optional[float] = None  # over finite nonzero elements

    def merge(self, other: "ScanCounts") -> "ScanCounts":
        pick = lambda f, a, b: (
            a if b is None else b if a is None else f(a, b)
        )
        return ScanCounts(
            self.zeros + other.zeros,
            self.subnormals + other.subnormals,
            self.infs + other.infs,
            self.nans + other.nans,
            self.total + other.total,
            pick(max, self.abs_max, other.abs_max),
            pick(min, self.abs_min_nonzero, other.abs_min_nonzero),
        )


def scan_array(arr: np.ndarray) -> ScanCounts:
    a = np.abs(arr.astype(np.float64))
    finite = np.isfinite(a)
    nans = int(np.isnan(a).sum())
    infs = int(np.isinf(a).sum())
    zeros = int((a == 0).sum())
    tiny = float(np.finfo(arr.dtype).tiny) if arr.dtype.kind == "f" else 0.0
    subnormals = int((finite & (a > 0) & (a < tiny)).sum())
    fin_vals = a[finite]
    abs_max = float(fin_vals.max()) if fin_vals.size else None
    nz = fin_vals[fin_vals > 0]
    abs_min = float(nz.min()) if nz.size else None
    return ScanCounts(zeros, subnormals, infs, nans, int(a.size), abs_max, abs_min)


def scan_tensors(tensors) -> ScanCounts:
    out = ScanCounts()
    for t in tensors:
        arr = t.data if isinstance(t, Tensor) else np.asarray(t)
        out = out.merge(scan_array(arr))
    return out


# ------------------------------------------------- assumption predicates

@dataclass
class AssumptionResult:
    assumption: str
    holds: bool
    reason: Optional[str] = None
    detail: Optional[dict] = None  # tensor index, element index, values/bits


def _limits(kind: Kind, fp16_min: Optional[float]):
    info = np.finfo(kind.dtype)
    lo = float(info.smallest_subnormal) if fp16_min is None else float(fp16_min)
    return lo, float(info.max)


def _element_detail(tensor_idx: int, flat_idx: int, kind: Kind, **arrays) -> dict:
    detail = {"tensor": tensor_idx, "index": flat_idx}
    for name, arr in arrays.items():
        val = arr.ravel()[flat_idx]
        detail[name] = float(val)
        if kind is Kind.F16:
            detail[name + "_bits"] = f"0x{int(np.float16(val).view(np.uint16)):04X}"
    return detail


def _first_bad(mask: np.ndarray) -> Optional[int]:
    idx = np.nonzero(mask.ravel())[0]
    return int(idx[0]) if idx.size else None


def _quotient_checks(num_abs: np.ndarray, v_new: np.ndarray, hp, dtype, lo, hi):
    """Per-element (ok, which-disjunct-failed reasons) for A3.2/A3.3 given
    |numerator| and the fresh second moment, all in S. The denominator is
    the one the active rule will use: sqrt(v)+eps standard, or the floored
    sqrt(max(v, floor)) when guarded (whose floor also retires the special
    flushed-to-zero disjunct)."""
    with np.errstate(all="ignore"):
        den = optim._denominator(v_new, hp, dtype)
        q1 = num_abs / den
        if hp.guard:
            zero = np.zeros(v_new.shape, dtype=bool)
            ok = np.isfinite(den) & (den > dtype.type(lo)) \
                & (q1 < dtype.type(hi))
            q2 = q1
        else:
            eps = dtype.type(hp.epsilon)
            zero = v_new == 0
            ok1 = (v_new >= dtype.type(lo)) & (den > dtype.type(lo)) \
                & (den < dtype.type(hi)) & (q1 < dtype.type(hi))
            q2 = num_abs / eps
            ok2 = q2 < dtype.type(hi)
            ok = np.where(zero, ok2, ok1)
    return ok.astype(bool), zero, den, q1, q2


def check_assumption(which: str, params: list, grads: list,
                     state: Optional[optim.OptimState], hp: optim.HyperParams,
                     fp16_min: Optional[float] = None) -> AssumptionResult:
    """Evaluate one of the sufficiency predicates on an optimizer snapshot.

    A3.1 (plain SGD): gradients special-free; the update eta*g and its
    application w - u create no specials; nonzero |update| within
    [fp16_min, fp16_max] (zero updates are benign underflow).
    A3.2 (RMSProp) / A3.3 (Adam): per element, either the fresh second moment
    is >= fp16_min with the denominator sqrt(v)+eps inside (fp16_min,
    fp16_max) and the update quotient below fp16_max, or the moment is
    exactly zero and |g|/eps (resp. |m_hat|/eps) stays below fp16_max.
    With hp.guard the certified rule changes with the step: the denominator
    becomes sqrt(max(v, floor)) and the zero-moment disjunct disappears
    (the floor covers it).

    fp16_min defaults to the kind's smallest subnormal; pass the smallest
    normal to use the stricter reading.
    """
    if which not in ASSUMPTIONS:
        raise ValueError(f"unknown assumption {which!r}")
    kind = grads[0].kind
    dtype = kind.dtype
    lo, hi = _limits(kind, fp16_min)

    def violated(reason, ti, fi, **arrays):
        return AssumptionResult(which, False, reason,
                                _element_detail(ti, fi, kind, **arrays))

    if which == "A3.1":
        with np.errstate(all="ignore"):
            eta = dtype.type(hp.eta)
            for ti, (w, g) in enumerate(zip(params, grads)):
                gd = g.data
                bad = _first_bad(~np.isfinite(gd))
                if bad is not None:
                    return violated("gradient special", ti, bad, g=gd)
                u = gd * eta
                bad = _first_bad(~np.isfinite(u))
                if bad is not None:
                    return violated("update eta*g overflow", ti, bad, g=gd, u=u)
                au = np.abs(u)
                bad = _first_bad((au != 0) & ((au < dtype.type(lo)) | (au > dtype.type(hi))))
                if bad is not None:
                    return violated("update outside [fp16_min, fp16_max]",
                                    ti, bad, g=gd, u=u)
                wd = w.data
                applied = wd - u
                bad = _first_bad(np.isfinite(wd) & ~np.isfinite(applied))
                if bad is not None:
                    return violated("applied update w-u overflow", ti, bad,
                                    w=wd, u=u)
        return AssumptionResult(which, True)

    if which == "A3.2":
        if state is None or state.v is None:
            raise ValueError("A3.2 needs an RMSProp snapshot with state.v")
        with np.errstate(all="ignore"):
            beta = dtype.type(hp.beta2)
            om = dtype.type(1) - beta
            for ti, (g, v) in enumerate(zip(grads, state.v)):
                gd, vd = g.data, v.data
                bad = _first_bad(~np.isfinite(gd))
                if bad is not None:
                    return violated("gradient special", ti, bad, g=gd)
                bad = _first_bad(~np.isfinite(vd))
                if bad is not None:
                    return violated("state v special", ti, bad, v=vd)
                v1 = vd * beta + (gd * gd) * om
                bad = _first_bad(~np.isfinite(v1))
                if bad is not None:
                    return violated("second moment update overflow", ti, bad,
                                    g=gd, v=v1)
                ok, zero, den, q1, q2 = _quotient_checks(np.abs(gd), v1, hp,
                                                         dtype, lo, hi)
                bad = _first_bad(~ok)
                if bad is not None:
                    if zero.ravel()[bad]:
                        return violated("g*eps^-1 overflow (v flushed to zero)",
                                        ti, bad, g=gd, q=q2)
                    return violated("denominator or quotient out of range",
                                    ti, bad, g=gd, v=v1, den=den, q=q1)
        return AssumptionResult(which, True)

    # A3.3
    if state is None or state.m is None or state.v is None:
        raise ValueError("A3.3 needs an Adam snapshot with state.m and state.v")
    moments, _ = optim._adam_moments(grads, state, hp, kind)
    with np.errstate(all="ignore"):
        for ti, (g, (m1, v1, m_hat, v_hat)) in enumerate(zip(grads, moments)):
            gd = g.data
            bad = _first_bad(~np.isfinite(gd))
            if bad is not None:
                return violated("gradient special", ti, bad, g=gd)
            bad = _first_bad(~np.isfinite(m_hat))
            if bad is not None:
                return violated("m_hat special", ti, bad, g=gd, m_hat=m_hat)
            bad = _first_bad(~np.isfinite(v_hat))
            if bad is not None:
                return violated("v_hat special", ti, bad, g=gd, v_hat=v_hat)
            ok, zero, den, q1, q2 = _quotient_checks(np.abs(m_hat), v_hat, hp,
                                                     dtype, lo, hi)
            bad = _first_bad(~ok)
            if bad is not None:
                if zero.ravel()[bad]:
                    return violated("m_hat*eps^-1 overflow (v_hat zero)",
                                    ti, bad, m_hat=m_hat, q=q2)
                return violated("denominator or quotient out of range", ti,
                                bad, m_hat=m_hat, v_hat=v_hat, den=den, q=q1)
    return AssumptionResult(which, True)


# -------------------------------------------- predicate vs reality oracle

def _aligned_state_arrays(params: list, state: Optional[optim.OptimState]):
    arrays = [p.data for p in params]
    if state is not None:
        for buf in (state.m, state.v):
            if buf is not None:
                arrays += [t.data for t in buf]
    return arrays


def count_new_specials(inputs: list, outputs: list):
    """(new_infs, new_nans) across aligned tensor pairs; an element counts
    once, as inf or as NaN, when the output has a special the input lacked."""
    new_inf = 0
    new_nan = 0
    for before, after in zip(inputs, outputs):
        new_inf += int((np.isinf(after) & ~np.isinf(before)).sum())
        new_nan += int((np.isnan(after) & ~np.isnan(before)).sum())
    return new_inf, new_nan


@dataclass
class ConsistencyResult:
    predicate: AssumptionResult
    new_infs: int
    new_nans: int

    @property
    def consistent(self) -> bool:
        return not (self.predicate.holds and (self.new_infs or self.new_nans))


def predict_then_observe(which: str, step_fn: Callable, params: list,
                         grads: list, state: Optional[optim.OptimState],
                         hp: optim.HyperParams,
                         fp16_min: Optional[float] = None) -> ConsistencyResult:
    """Evaluate the predicate, run the real step, compare: a holding
    predicate must imply zero new specials in params' and state'."""
    pred = check_assumption(which, params, grads, state, hp, fp16_min=fp16_min)
    new_params, new_state = step_fn(params, grads, state, hp)
    before = _aligned_state_arrays(params, state)
    after = _aligned_state_arrays(new_params, new_state)
    inf_n, nan_n = count_new_specials(before, after)
    return ConsistencyResult(pred, inf_n, nan_n)


# ----------------------------------------------------------- run monitor

@dataclass
class StabilityReport:
    optimizer: str
    precision: str
    guard: bool
    epsilon: float
    per_epoch: list  # dicts: epoch, grad_abs_max, grad_abs_min_nonzero,
    #                  weight_nan_fraction, nan_count, inf_count, underflow_count
    underflow_to_zero: int
    overflow_to_inf: int
    nan_created: int
    first_nan_step: Optional[int]
    first_inf_step: Optional[int]
    first_violation: Optional[dict]
    diagnostic: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StabilityReport":
        raw = json.loads(text)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ValueError(f"malformed stability report: {exc}") from None


class RunMonitor:
    """Accumulates stability telemetry over one training run.

    observe_step sees every optimizer transition; end_epoch snapshots the
    epoch aggregates. Step numbers are 1-based and equal the optimizer's t
    counter after the step. In diagnostic mode every step is shadowed in
    F64 from the same S inputs to count true underflow-to-zero events
    (S output exactly zero where the F64 result is nonzero); this doubles
    step cost and is off by default.
    """

    def __init__(self, algo: str, hp: optim.HyperParams, kind: Kind,
                 diagnostic: bool = False, fp16_min: Optional[float] = None):
        self.algo = algo
        self.hp = hp
        self.kind = kind
        self.diagnostic = diagnostic
        self.fp16_min = fp16_min
        self.assumption = ASSUMPTION_FOR_ALGO[algo]
        self.underflow_to_zero = 0
        self.overflow_to_inf = 0
        self.nan_created = 0
        self.first_nan_step: Optional[int] = None
        self.first_inf_step: Optional[int] = None
        self.first_violation: Optional[dict] = None
        self.per_epoch: list = []
        self._epoch_grad_max: Optional[float] = None
        self._epoch_grad_min: Optional[float] = None
        self._epoch_events = [0, 0, 0]  # nan, inf, underflow

    def observe_step(self, step_no: int, params: list, grads, state,
                     new_params: list, new_state) -> None:
        gmax, gmin = grads.abs_max, grads.abs_min_nonzero
        if gmax is not None:
            self._epoch_grad_max = gmax if self._epoch_grad_max is None \
                else max(self._epoch_grad_max, gmax)
        if gmin is not None:
            self._epoch_grad_min = gmin if self._epoch_grad_min is None \
                else min(self._epoch_grad_min, gmin)

        if self.first_violation is None:
            res = check_assumption(self.assumption, params, grads.params(),
                                   state, self.hp, fp16_min=self.fp16_min)
            if not res.holds:
                self.first_violation = {
                    "step": step_no,
                    "assumption": res.assumption,
                    "reason": res.reason,
                    "detail": res.detail,
                }

        before = _aligned_state_arrays(params, state)
        after = _aligned_state_arrays(new_params, new_state)
        inf_n, nan_n = count_new_specials(before, after)
        if inf_n:
            self.overflow_to_inf += inf_n
            self._epoch_events[1] += inf_n
            if self.first_inf_step is None:
                self.first_inf_step = step_no
        if nan_n:
            self.nan_created += nan_n
            self._epoch_events[0] += nan_n
            if self.first_nan_step is None:
                self.first_nan_step = step_no

        if self.diagnostic:
            to64 = lambda ts: [Tensor(t.data.astype(np.float64), Kind.F64)
                               for t in ts]
            state64 = optim.OptimState(
                None if state.m is None else to64(state.m),
                None if state.v is None else to64(state.v),
                state.t,
            )
            p64, s64 = optim.step(self.algo, to64(params),
                                  to64(grads.params()), state64, self.hp)
            shadow_after = _aligned_state_arrays(p64, s64)
            flushed = 0
            for s_out, f_out in zip(after, shadow_after):
                flushed += int(((s_out == 0) & (f_out != 0)
                                & np.isfinite(f_out)).sum())
            if flushed:
                self.underflow_to_zero += flushed
                self._epoch_events[2] += flushed

    def end_epoch(self, epoch: int, params: list) -> dict:
        counts = scan_tensors(params)
        row = {
            "epoch": epoch,
            "grad_abs_max": self._epoch_grad_max,
            "grad_abs_min_nonzero": self._epoch_grad_min,
            "weight_nan_fraction": counts.nans / counts.total if counts.total else 0.0,
            "nan_count": self._epoch_events[0],
            "inf_count": self._epoch_events[1],
            "underflow_count": self._epoch_events[2],
        }
        self.per_epoch.append(row)
        self._epoch_grad_max = None
        self._epoch_grad_min = None
        self._epoch_events = [0, 0, 0]
        return row

    def report(self) -> StabilityReport:
        return StabilityReport(
            optimizer=self.algo,
            precision=self.kind.value,
            guard=self.hp.guard,
            epsilon=self.hp.epsilon,
            per_epoch=list(self.per_epoch),
            underflow_to_zero=self.underflow_to_zero,
            overflow_to_inf=self.overflow_to_inf,
            nan_created=self.nan_created,
            first_nan_step=self.first_nan_step,
            first_inf_step=self.first_inf_step,
            first_violation=self.first_violation,
            diagnostic=self.diagnostic,
        )
