"""Minimal reverse-mode automatic differentiation for the three small networks.

Tensors wrap float64 numpy arrays and build a computation graph as ops are
applied; calling ``backward()`` on a scalar loss accumulates exact gradients
into every reachable parameter. Convolution is cross-correlation with reflect
padding handled by an explicit padding op, so padded gradients fold back onto
their mirrored source pixels.

Feature maps are (batch, channels, height, width); dense activations are
(batch, features). All training math runs in float64; checkpoints store
float32 payloads.
"""

from __future__ import annotations

import contextlib
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class GradientError(RuntimeError):
    """Raised when a non-finite gradient or loss is encountered."""


_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    """Run ops without recording the graph (forward values only)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def grad_enabled() -> bool:
    return _GRAD_ENABLED[-1]


# ---------------------------------------------------------------------------
# Tensor and graph
# ---------------------------------------------------------------------------

class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw_fn")

    def __init__(self, data, requires_grad=False, parents=(), bw=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        req = requires_grad or any(p.requires_grad for p in parents)
        if parents and not grad_enabled():
            req = False
        self.requires_grad = req
        self._parents = tuple(parents) if req else ()
        self._bw_fn = bw if req else None

    @property
    def _bw(self):
        return self._bw_fn

    @_bw.setter
    def _bw(self, fn):
        # backward closures capture forward buffers; keep them only when the
        # graph can actually be walked
        self._bw_fn = fn if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(order):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise / reduction ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    out._bw = bw
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    out._bw = bw
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    out._bw = bw
    return out


def square(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data * x.data, parents=(x,))
    out._bw = lambda g: x._accum(2.0 * x.data * g)
    return out


def log(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.log(x.data), parents=(x,))
    out._bw = lambda g: x._accum(g / x.data)
    return out


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only where no clamping occurred."""
    x = as_tensor(x)
    out = Tensor(np.clip(x.data, lo, hi), parents=(x,))
    inside = (x.data > lo) & (x.data < hi)
    out._bw = lambda g: x._accum(g * inside)
    return out


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), parents=(x,))
    out._bw = lambda g: x._accum(g * mask)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor(s, parents=(x,))
    out._bw = lambda g: x._accum(g * s * (1.0 - s))
    return out


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims), parents=(x,))
    n = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accum(np.broadcast_to(g, x.data.shape) / n)

    out._bw = bw
    return out


def total(x, axis=None, keepdims=False) -> Tensor:
    """Sum reduction (named to avoid shadowing builtins)."""
    x = as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims), parents=(x,))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accum(np.broadcast_to(g, x.data.shape))

    out._bw = bw
    return out


def softmax(x, axis: int) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, parents=(x,))

    def bw(g):
        x._accum(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    out._bw = bw
    return out


def log_softmax(x, axis: int) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    ls = z - lse
    out = Tensor(ls, parents=(x,))

    def bw(g):
        x._accum(g - np.exp(ls) * g.sum(axis=axis, keepdims=True))

    out._bw = bw
    return out


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape), parents=(x,))
    out._bw = lambda g: x._accum(g.reshape(x.data.shape))
    return out


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    out._bw = bw
    return out


# ---------------------------------------------------------------------------
# Dense / conv / pooling
# ---------------------------------------------------------------------------

def linear(x, w, b=None) -> Tensor:
    """x (B, n) @ w (m, n)^T + b (m,) -> (B, m)."""
    x, w = as_tensor(x), as_tensor(w)
    out_data = x.data @ w.data.T
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out_data = out_data + b.data
        parents.append(b)
    out = Tensor(out_data, parents=tuple(parents))

    def bw(g):
        if x.requires_grad:
            x._accum(g @ w.data)
        if w.requires_grad:
            w._accum(g.T @ x.data)
        if b is not None and b.requires_grad:
            b._accum(g.sum(axis=0))

    out._bw = bw
    return out


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    m = np.abs(idx) % period
    return np.where(m < n, m, period - m)


def _fold_reflect_axis(g: np.ndarray, n: int, p: int, axis: int) -> np.ndarray:
    """Fold gradients of a reflect-padded axis back onto the source axis."""
    if p == 0:
        return g
    g = np.moveaxis(g, axis, -1)
    core = g[..., p : p + n].copy()
    if n == 1:
        core[..., 0] += g[..., :p].sum(axis=-1) + g[..., p + n :].sum(axis=-1)
    else:
        left = g[..., :p]
        right = g[..., p + n :]
        core[..., 1 : p + 1] += left[..., ::-1]
        core[..., n - 1 - p : n - 1] += right[..., ::-1]
    return np.moveaxis(core, -1, axis)


def reflect_pad2d(x, pad_h: int, pad_w: int) -> Tensor:
    """Mirror-pad the two trailing spatial axes of a (B, C, H, W) tensor."""
    x = as_tensor(x)
    n_h, n_w = x.data.shape[2], x.data.shape[3]
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)), mode="reflect")
    out = Tensor(padded, parents=(x,))

    def bw(g):
        g = _fold_reflect_axis(g, n_h, pad_h, axis=2)
        g = _fold_reflect_axis(g, n_w, pad_w, axis=3)
        x._accum(g)

    out._bw = bw
    return out


def conv2d_valid(x, w, b) -> Tensor:
    """Valid cross-correlation: x (B,Ci,H,W) * w (Co,Ci,kh,kw) + b (Co,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    bsz, ci, h, wd = x.data.shape
    co, ci2, kh, kw = w.data.shape
    if ci != ci2:
        raise ValueError(f"channel mismatch: input {ci}, kernel {ci2}")
    ho, wo = h - kh + 1, wd - kw + 1
    cols = sliding_window_view(x.data, (kh, kw), axis=(2, 3))
    cols_mat = cols.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, ci * kh * kw)
    w_mat = w.data.reshape(co, ci * kh * kw)
    out_data = (cols_mat @ w_mat.T).reshape(bsz, ho, wo, co).transpose(0, 3, 1, 2)
    out_data = out_data + b.data[None, :, None, None]
    out = Tensor(out_data, parents=(x, w, b))

    def bw(g):
        g_mat = g.transpose(0, 2, 3, 1).reshape(bsz * ho * wo, co)
        if b.requires_grad:
            b._accum(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            w._accum((g_mat.T @ cols_mat).reshape(co, ci, kh, kw))
        if x.requires_grad:
            # input gradient = full correlation of g with the rotated kernel
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gcols = sliding_window_view(gp, (kh, kw), axis=(2, 3))
            gcols_mat = gcols.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * wd, co * kh * kw)
            w_rot = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(ci, co * kh * kw)
            dx = (gcols_mat @ w_rot.T).reshape(bsz, h, wd, ci).transpose(0, 3, 1, 2)
            x._accum(dx)

    out._bw = bw
    return out


def conv2d(x, w, b, padding: str = "reflect") -> Tensor:
    """Size-preserving convolution with reflect padding for odd kernels."""
    kh, kw = as_tensor(w).data.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel must be odd-sized, got {(kh, kw)}")
    if padding == "valid":
        return conv2d_valid(x, w, b)
    if padding != "reflect":
        raise ValueError(f"unknown padding {padding!r}")
    if kh == 1 and kw == 1:
        return conv2d_valid(x, w, b)
    return conv2d_valid(reflect_pad2d(x, kh // 2, kw // 2), w, b)


def maxpool2d(x, window, stride) -> Tensor:
    """Max pooling; ties route the gradient to the first element row-major."""
    x = as_tensor(x)
    wh, ww = window
    sh, sw = stride
    bsz, c, h, wd = x.data.shape
    if wh > h or ww > wd:
        raise ValueError(f"window {window} larger than input {(h, wd)}")
    v = sliding_window_view(x.data, (wh, ww), axis=(2, 3))[:, :, ::sh, ::sw]
    bsz_, c_, ho, wo = v.shape[:4]
    flat = v.reshape(bsz, c, ho, wo, wh * ww)
    idx = flat.argmax(axis=-1)
    out = Tensor(np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0], parents=(x,))

    def bw(g):
        bi, cidx, oy, ox = np.indices((bsz, c, ho, wo))
        rows = oy * sh + idx // ww
        cols = ox * sw + idx % ww
        dx = np.zeros_like(x.data)
        np.add.at(dx, (bi, cidx, rows, cols), g)
        x._accum(dx)

    out._bw = bw
    return out


def axis_avg_pool(x) -> tuple[Tensor, Tensor]:
    """Per-axis mean profiles of a (B, C, H, W) feature grid.

    Returns (horizontal, vertical): the horizontal profile is the per-column
    mean (length W), the vertical profile the per-row mean (length H), both
    shaped (B, C, 1, L) so 1x1 convolutions can consume them.
    """
    x = as_tensor(x)
    b, c, h, w = x.data.shape
    horizontal = reshape(mean(x, axis=2), (b, c, 1, w))
    vertical = reshape(mean(x, axis=3), (b, c, 1, h))
    return horizontal, vertical


def adaptive_pool_matrix(length: int, out_len: int) -> np.ndarray:
    """Averaging matrix (out_len, length) for adaptive 1-D average pooling."""
    m = np.zeros((out_len, length))
    for i in range(out_len):
        lo = (i * length) // out_len
        hi = -(-(i + 1) * length // out_len)  # ceil division
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


# ---------------------------------------------------------------------------
# Parameter storage
# ---------------------------------------------------------------------------

class ParamStore:
    """Named parameter tensors organized into disjoint groups.

    Frozen groups are skipped by optimizers no matter what gradients they
    accumulated.
    """

    def __init__(self):
        self.groups: dict[str, dict[str, Tensor]] = {}
        self.frozen: set[str] = set()

    def add(self, group: str, name: str, data) -> Tensor:
        bucket = self.groups.setdefault(group, {})
        if name in bucket:
            raise ValueError(f"duplicate parameter {group}/{name}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        bucket[name] = t
        return t

    def group(self, name: str) -> dict[str, Tensor]:
        return self.groups[name]

    def items(self, groups=None):
        names = self.groups.keys() if groups is None else groups
        for gname in names:
            for pname, t in self.groups[gname].items():
                yield gname, pname, t

    def zero_grad(self, groups=None):
        for _, _, t in self.items(groups):
            t.grad = None

    def freeze(self, group: str):
        self.frozen.add(group)

    def unfreeze(self, group: str):
        self.frozen.discard(group)

    def state_hash(self, groups=None) -> int:
        """Order-stable hash of parameter bytes; for isolation tests."""
        acc = 0
        for gname, pname, t in self.items(groups):
            acc = hash((acc, gname, pname, t.data.tobytes())) & 0xFFFFFFFFFFFFFFFF
        return acc


# ---------------------------------------------------------------------------
# Optimizers and schedule
# ---------------------------------------------------------------------------

@dataclass
class LinearDecay:
    """Linear learning-rate decay from `base` to `floor` over `horizon` episodes."""

    base: float
    horizon: int
    floor: float = 0.0

    def lr(self, episode: int) -> float:
        frac = max(0.0, 1.0 - episode / self.horizon) if self.horizon > 0 else 1.0
        return self.floor + (self.base - self.floor) * frac


class Optimizer:
    kind = "base"

    def __init__(self, store: ParamStore, groups, schedule: LinearDecay,
                 weight_decay: float = 0.0):
        self.store = store
        self.groups = list(groups)
        self.schedule = schedule
        self.weight_decay = weight_decay
        self.slots: dict[tuple[str, str], dict[str, np.ndarray | int]] = {}

    def _check(self, gname, pname, grad):
        if grad is None:
            return None
        if not np.isfinite(grad).all():
            raise GradientError(f"non-finite gradient in {gname}/{pname}")
        return grad

    def step(self, episode: int, groups=None):
        lr = self.schedule.lr(episode)
        targets = self.groups if groups is None else [g for g in groups if g in self.groups]
        for gname in targets:
            if gname in self.store.frozen:
                continue
            for pname, t in self.store.group(gname).items():
                grad = self._check(gname, pname, t.grad)
                if grad is None:
                    continue
                if self.weight_decay:
                    # decoupled decay: counters random-walk norm inflation on
                    # parameters whose gradients are noise-dominated
                    t.data -= lr * self.weight_decay * t.data
                self._update(gname, pname, t, grad, lr)

    def _update(self, gname, pname, t, grad, lr):
        raise NotImplementedError


class SGD(Optimizer):
    kind = "sgd"

    def _update(self, gname, pname, t, grad, lr):
        t.data -= lr * grad


class Adam(Optimizer):
    kind = "adam"
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def _update(self, gname, pname, t, grad, lr):
        slot = self.slots.setdefault(
            (gname, pname),
            {"m": np.zeros_like(t.data), "v": np.zeros_like(t.data), "t": 0},
        )
        slot["t"] += 1
        slot["m"] = self.beta1 * slot["m"] + (1 - self.beta1) * grad
        slot["v"] = self.beta2 * slot["v"] + (1 - self.beta2) * grad * grad
        m_hat = slot["m"] / (1 - self.beta1 ** slot["t"])
        v_hat = slot["v"] / (1 - self.beta2 ** slot["t"])
        t.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry] = field(default_factory=list)
    tol: float = 1e-4

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def gradcheck(fn, params: dict, h: float = 1e-5, tol: float = 1e-4,
              rng: np.random.Generator | None = None, max_entries: int = 48) -> GradCheckReport:
    """Compare reverse-mode gradients of ``fn()`` against central differences.

    `fn` must rebuild its graph from the current parameter data on every call
    and return a scalar Tensor. Large parameters are spot-checked on a random
    subset of entries.
    """
    rng = rng or np.random.default_rng(0)
    for t in params.values():
        t.grad = None
    loss = fn()
    loss.backward()
    analytic = {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for k, t in params.items()}

    report = GradCheckReport(tol=tol)
    for name, t in params.items():
        flat = t.data.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
        worst = 0.0
        for i in picks:
            orig = flat[i]
            flat[i] = orig + h
            plus = float(fn().data)
            flat[i] = orig - h
            minus = float(fn().data)
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * h)
            a = analytic[name].reshape(-1)[i]
            denom = max(abs(a), abs(numeric))
            err = 0.0 if denom < 1e-8 else abs(a - numeric) / denom
            worst = max(worst, err)
        report.entries.append(GradCheckEntry(name=name, max_rel_err=worst))
    return report


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"PSRCKPT1"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """Raised for unreadable or mismatched checkpoint files."""


def _write_str(out: bytearray, s: str):
    raw = s.encode("utf-8")
    out += struct.pack("<H", len(raw))
    out += raw


def _write_array(out: bytearray, arr: np.ndarray):
    arr32 = np.asarray(arr, dtype="<f4")
    out += struct.pack("<B", arr32.ndim)
    for d in arr32.shape:
        out += struct.pack("<I", d)
    out += arr32.tobytes()


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        b = self.blob[self.pos : self.pos + n]
        self.pos += n
        return b

    def read_str(self) -> str:
        (n,) = struct.unpack("<H", self.take(2))
        return self.take(n).decode("utf-8")

    def read_array(self) -> np.ndarray:
        (ndim,) = struct.unpack("<B", self.take(1))
        shape = tuple(struct.unpack("<I", self.take(4))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(self.take(4 * count), dtype="<f4")
        return data.reshape(shape).astype(np.float64)


def save_checkpoint(path, store: ParamStore, optimizers: dict[str, Optimizer],
                    episode: int) -> None:
    """Write parameters, optimizer state and the episode counter.

    Layout (little-endian): magic, version u32, episode u64, then a counted
    list of named float32 arrays for parameters ("group/name") and another for
    optimizer slots ("optimizer/group/name/slot"); Adam step counts are stored
    as 0-d arrays under slot "t".
    """
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    out += struct.pack("<Q", episode)

    params = list(store.items())
    out += struct.pack("<I", len(params))
    for gname, pname, t in params:
        _write_str(out, f"{gname}/{pname}")
        _write_array(out, t.data)

    opt_entries = []
    for oname, opt in optimizers.items():
        for (gname, pname), slot in opt.slots.items():
            for sname, val in slot.items():
                opt_entries.append((f"{oname}/{gname}/{pname}/{sname}", np.asarray(val, dtype=np.float64)))
    out += struct.pack("<I", len(opt_entries))
    for name, val in opt_entries:
        _write_str(out, name)
        _write_array(out, val)

    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_checkpoint(path, store: ParamStore,
                    optimizers: dict[str, Optimizer] | None = None) -> int:
    """Restore parameters (and optimizer slots, if given); returns the episode."""
    with open(path, "rb") as fh:
        blob = fh.read()
    rd = _Reader(blob)
    if rd.take(8) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    (version,) = struct.unpack("<I", rd.take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (episode,) = struct.unpack("<Q", rd.take(8))

    (n_params,) = struct.unpack("<I", rd.take(4))
    for _ in range(n_params):
        full = rd.read_str()
        arr = rd.read_array()
        gname, pname = full.split("/", 1)
        try:
            t = store.group(gname)[pname]
        except KeyError as exc:
            raise CheckpointError(f"checkpoint parameter {full} not in store") from exc
        if t.data.shape != arr.shape:
            raise CheckpointError(
                f"shape mismatch for {full}: {t.data.shape} vs {arr.shape}"
            )
        t.data = arr

    (n_opt,) = struct.unpack("<I", rd.take(4))
    for _ in range(n_opt):
        full = rd.read_str()
        arr = rd.read_array()
        if optimizers is None:
            continue
        oname, gname, pname, sname = full.split("/")
        opt = optimizers.get(oname)
        if opt is None:
            continue
        slot = opt.slots.setdefault((gname, pname), {})
        slot[sname] = int(arr) if sname == "t" else arr
    return episode
