"""MLP classifier with reverse-mode gradients, generic over scalar kind.

Plain image-classifier stack: dense layers, relu between them, softmax +
mean cross-entropy on top. In F16 every polynomial operation (matmul,
bias add, elementwise products, the loss mean) rounds per operation via the
tensor module. Transcendental policy: exp and log have no scalar-reference
counterpart, so they are computed in float64 on the S values and rounded
once back to S.

Forward never raises on overflow: specials flow through to logits, loss and
gradients, where the stability module counts them.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng
from . import tensor as T
from .tensor import Kind, Tensor


@dataclass(frozen=True, eq=False)
class MlpModel:
    dims: tuple
    weights: list  # W_l, shape (dims[l], dims[l+1])
    biases: list  # b_l, shape (dims[l+1],)
    kind: Kind

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list:
        """Interleaved [W0, b0, W1, b1, ...]; the optimizer's parameter list."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def replace_params(self, params: list) -> "MlpModel":
        ws = params[0::2]
        bs = params[1::2]
        return MlpModel(self.dims, list(ws), list(bs), self.kind)


def param_count(dims) -> int:
    return sum(n * k + k for n, k in zip(dims[:-1], dims[1:]))


def init_mlp(dims, kind: Kind, seed: int) -> MlpModel:
    """Glorot-uniform weights drawn in F64 from xoshiro256**, rounded once to
    the scalar kind; zero biases. Same seed, same kind => identical bits."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"bad layer dims {dims}")
    gen = rng.Xoshiro256StarStar(seed)
    weights, biases = [], []
    for n, k in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (n + k))
        draws = np.array(gen.uniforms(n * k), dtype=np.float64)
        w64 = (2.0 * draws - 1.0) * bound
        weights.append(T.make(w64.reshape(n, k), kind))
        biases.append(T.zeros((k,), kind))
    return MlpModel(dims, weights, biases, kind)


def _relu(z: np.ndarray) -> np.ndarray:
    # max(z, +0) with the max2 convention: first operand wins ties, so
    # relu(-0) stays -0; NaN propagates
    with np.errstate(invalid="ignore"):
        return np.maximum(z, z.dtype.type(0))


def forward(model: MlpModel, x: Tensor):
    """Returns (logits, cache); cache carries the activations and
    pre-activations backward needs."""
    if x.kind is not model.kind:
        raise ValueError(f"input kind {x.kind.value} != model kind {model.kind.value}")
    if x.data.ndim != 2 or x.shape[0] != model.dims[0]:
        raise ValueError(f"input shape {x.shape} does not feed dims {model.dims}")
    if not np.isfinite(x.data).all():
        raise ValueError("non-finite values in network input")
    acts = [x]  # a_0 .. a_{L-1}
    zs = []  # z_1 .. z_L
    a = x
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = T.affine(T.matmul_t(w, a), b)
        zs.append(z)
        if l < model.n_layers - 1:
            a = T._wrap(_relu(z.data), model.kind)
            acts.append(a)
    return zs[-1], {"acts": acts, "zs": zs}


def _exp_in_kind(arr: np.ndarray, kind: Kind) -> np.ndarray:
    with np.errstate(all="ignore"):
        return np.exp(arr.astype(np.float64)).astype(kind.dtype)


def _log_in_kind(arr: np.ndarray, kind: Kind) -> np.ndarray:
    with np.errstate(all="ignore"):
        return np.log(arr.astype(np.float64)).astype(kind.dtype)


def softmax_columns(z: Tensor) -> Tensor:
    """Stabilized softmax per column: subtract the column max (sequential
    fold), exponentiate, divide by the sequential column sum."""
    d = z.data
    with np.errstate(all="ignore"):
        m = d[0]
        for i in range(1, d.shape[0]):
            m = np.where(d[i] > m, d[i], m)
        shifted = d - m[None, :]
        e = _exp_in_kind(shifted, z.kind)
        s = e[0]
        for i in range(1, e.shape[0]):
            s = s + e[i]
        p = e / s[None, :]
    return T._wrap(p, z.kind)


def _check_labels(labels, k: int, m: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (m,):
        raise ValueError(f"labels shape {labels.shape}, want ({m},)")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")
    return labels.astype(np.int64)


def _seq_mean(vec: np.ndarray, kind: Kind):
    """Ascending sequential sum (rounds per add in S), then one divide by m."""
    with np.errstate(all="ignore"):
        total = np.add.accumulate(vec)[-1]
        return total / kind.dtype.type(len(vec))


@dataclass(frozen=True)
class Gradients:
    weights: list
    biases: list
    stats: list = field(repr=False)  # per tensor: (name, abs_max, abs_min_nonzero)

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def abs_max(self):
        vals = [s[1] for s in self.stats if s[1] is not None]
        return max(vals) if vals else None

    @property
    def abs_min_nonzero(self):
        vals = [s[2] for s in self.stats if s[2] is not None]
        return min(vals) if vals else None


def _abs_stats(name: str, arr: np.ndarray):
    a = np.abs(arr.astype(np.float64))
    finite = np.isfinite(a)
    any_finite = finite.any()
    mx = float(a[finite].max()) if any_finite else None
    nz = finite & (a > 0)
    mn = float(a[nz].min()) if nz.any() else None
    return (name, mx, mn)


def _grads_with_stats(gws: list, gbs: list) -> Gradients:
    stats = []
    for l, (gw, gb) in enumerate(zip(gws, gbs)):
        stats.append(_abs_stats(f"W{l}", gw.data))
        stats.append(_abs_stats(f"b{l}", gb.data))
    return Gradients(gws, gbs, stats)


def loss_and_backward(model: MlpModel, x: Tensor, labels, loss_scale: float = 1.0):
    """Mean cross-entropy and reverse-mode gradients.

    loss_scale multiplies the seed gradient (equivalent to scaling the loss
    before backward); the combined factor loss_scale/m is rounded to S once
    and applied in a single multiply, so scaling happens before any tiny
    per-example value can flush to zero. The returned loss is unscaled.
    """
    logits, cache = forward(model, x)
    k, m = logits.shape
    labels = _check_labels(labels, k, m)
    if m == 0:
        raise ValueError("empty batch")
    kind = model.kind
    dtype = kind.dtype

    p = softmax_columns(logits)
    cols = np.arange(m)
    with np.errstate(all="ignore"):
        p_label = p.data[labels, cols]
        clamped = np.maximum(p_label, np.finfo(dtype).tiny)
        losses = np.negative(_log_in_kind(clamped, kind))
        loss = float(_seq_mean(losses, kind))

        # seed: dZ_L = (P - Y) * (loss_scale/m), one rounded multiply
        c = dtype.type(float(loss_scale) / m)
        d = p.data.copy()
        d[labels, cols] = d[labels, cols] - dtype.type(1)
        dz = T._wrap(d * c, kind)

    acts, zs = cache["acts"], cache["zs"]
    ones = T.make(np.ones((m, 1)), kind)
    gws: list = [None] * model.n_layers
    gbs: list = [None] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        a_prev = acts[l]
        # dW = A_{l-1} dZ^T and db = dZ 1, both as matmul_t folds over the
        # batch index, ascending, accumulator seeded by the first term
        gws[l] = T.matmul_t(T.transpose(a_prev), T.transpose(dz))
        gbs[l] = T._wrap(T.matmul_t(T.transpose(dz), ones).data.ravel(), kind)
        if l > 0:
            da = T.matmul_t(T.transpose(model.weights[l]), dz)
            with np.errstate(invalid="ignore"):
                # relu backward is a mask selection: pass where z > 0
                dz = T._wrap(
                    np.where(zs[l - 1].data > 0, da.data, dtype.type(0)), kind
                )
    return loss, _grads_with_stats(gws, gbs)


def evaluate(model: MlpModel, x: Tensor, labels, batch_size: int = 512) -> float:
    """Top-1 accuracy; argmax ties go to the lowest class index and any NaN
    in a column makes that column wrong."""
    n, total = x.shape
    labels = _check_labels(labels, model.dims[-1], total)
    if total == 0:
        raise ValueError("empty evaluation set")
    correct = 0
    for start in range(0, total, batch_size):
        stop = min(start + batch_size, total)
        xb = T._wrap(x.data[:, start:stop], model.kind)
        logits, _ = forward(model, xb)
        ld = logits.data
        nan_cols = np.isnan(ld).any(axis=0)
        preds = np.argmax(ld, axis=0)  # first max wins: lowest class index
        ok = (preds == labels[start:stop]) & ~nan_cols
        correct += int(ok.sum())
    return correct / total


_MAGIC = b"S16M"
_VERSION = 1
_KIND_CODES = {Kind.F16: 0, Kind.F32: 1, Kind.F64: 2}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}
_WIRE_DTYPES = {Kind.F16: "<f2", Kind.F32: "<f4", Kind.F64: "<f8"}


def save_model(model: MlpModel, path) -> None:
    """Versioned binary checkpoint: header (magic, version, kind, dims), then
    raw little-endian parameter bits, weights before bias per layer.
    path may be a filesystem path or an open binary file object."""
    parts = [
        _MAGIC,
        struct.pack("<HBB", _VERSION, _KIND_CODES[model.kind], 0),
        struct.pack("<I", len(model.dims)),
        struct.pack(f"<{len(model.dims)}I", *model.dims),
    ]
    wire = _WIRE_DTYPES[model.kind]
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w.data).astype(wire).tobytes())
        parts.append(np.ascontiguousarray(b.data).astype(wire).tobytes())
    blob = b"".join(parts)
    if hasattr(path, "write"):
        path.write(blob)
    else:
        with open(path, "wb") as fh:
            fh.write(blob)


def load_model(path) -> MlpModel:
    if hasattr(path, "read"):
        blob = path.read()
    else:
        with open(path, "rb") as fh:
            blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"bad checkpoint magic {blob[:4]!r}")
    version, kind_code, _ = struct.unpack_from("<HBB", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if kind_code not in _KIND_FROM_CODE:
        raise ValueError(f"unknown scalar kind code {kind_code}")
    kind = _KIND_FROM_CODE[kind_code]
    (ndims,) = struct.unpack_from("<I", blob, 8)
    dims = struct.unpack_from(f"<{ndims}I", blob, 12)
    if ndims < 2 or any(d == 0 for d in dims):
        raise ValueError(f"bad checkpoint dims {dims}")
    off = 12 + 4 * ndims
    wire = np.dtype(_WIRE_DTYPES[kind])
    weights, biases = [], []
    for n, k in zip(dims[:-1], dims[1:]):
        for shape, dest in (((n, k), weights), ((k,), biases)):
            count = int(np.prod(shape))
            nbytes = count * wire.itemsize
            if off + nbytes > len(blob):
                raise ValueError("truncated checkpoint")
            arr = np.frombuffer(blob, dtype=wire, count=count, offset=off)
            dest.append(T._wrap(arr.reshape(shape).astype(kind.dtype), kind))
            off += nbytes
    if off != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    return MlpModel(tuple(int(d) for d in dims), weights, biases, kind)
