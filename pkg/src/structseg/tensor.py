"""Minimal reverse-mode autograd over numpy arrays.

Tensors are dense row-major arrays (float32 by default, float64 for
gradient checking). Each differentiable op records a backward closure;
`backward(loss)` replays them in reverse topological order exactly once.
Tensors that already carry data and no pending graph are immutable by
convention: no op mutates its inputs.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GraphError, ShapeError, ConfigError

_grad_enabled = True
_debug_checks = False

# Sentinel stored in place of a backward closure once it has run.
_CONSUMED = object()

GELU_CUBIC = 0.044715
_GELU_SCALE = 0.7978845608028654  # sqrt(2 / pi)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf screening of every op output."""
    global _debug_checks
    _debug_checks = enabled


class Tensor:
    """A rank-N array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def make_op_output(data: np.ndarray, parents: Sequence[Tensor],
                   backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result, recording the adjoint closure when grads are on.

    `backward_fn(grad_out)` must accumulate into the parents' grads via
    `accumulate_grad`. Exposed so fused ops (e.g. losses) can live outside
    this module.
    """
    if _debug_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values in op output")
    requires = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires, dtype=data.dtype)
    if requires:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _accumulate_grad_slice(t: Tensor, index, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad[index] += g


def backward(loss: Tensor) -> None:
    """Populate grads of every requires_grad tensor reachable from `loss`.

    The loss must be scalar. Each recorded op runs its adjoint exactly
    once; a second backward through any part of the same graph raises.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss does not require grad; no graph recorded")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node._backward is _CONSUMED:
            raise GraphError("backward called twice through the same graph")
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    accumulate_grad(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        fn = node._backward
        if fn is None:
            continue  # leaf
        fn(node.grad)
        node._backward = _CONSUMED
        if node is not loss:
            node.grad = None  # intermediates do not keep grads


# ---------------------------------------------------------------------------
# elementwise ops


def _binary_check(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")
    if a.dtype != b.dtype:
        raise TypeError(f"{name}: dtypes {a.dtype} and {b.dtype} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "add")

    def bw(g):
        accumulate_grad(a, g)
        accumulate_grad(b, g)

    return make_op_output(a.data + b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "mul")

    def bw(g):
        accumulate_grad(a, g * b.data)
        accumulate_grad(b, g * a.data)

    return make_op_output(a.data * b.data, (a, b), bw)


def scale(x: Tensor, s: float) -> Tensor:
    s = x.data.dtype.type(s)

    def bw(g):
        accumulate_grad(x, g * s)

    return make_op_output(x.data * s, (x,), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        accumulate_grad(x, g * mask)

    return make_op_output(np.where(mask, x.data, 0), (x,), bw)


def gelu(x: Tensor) -> Tensor:
    """GELU via the tanh approximation (cubic constant 0.044715)."""
    d = x.data
    sq = d * d
    t = np.tanh(_GELU_SCALE * (d + GELU_CUBIC * sq * d))
    y = 0.5 * d * (1.0 + t)

    def bw(g):
        dinner = _GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * sq)
        dy = 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * dinner
        accumulate_grad(x, g * dy)

    return make_op_output(y.astype(d.dtype), (x,), bw)


def sum_all(x: Tensor) -> Tensor:
    def bw(g):
        accumulate_grad(x, np.full_like(x.data, g))

    return make_op_output(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), bw)


# ---------------------------------------------------------------------------
# shape ops


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)

    def bw(g):
        accumulate_grad(x, g.reshape(x.shape))

    return make_op_output(x.data.reshape(shape), (x,), bw)


def transpose_last2(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ShapeError(f"transpose_last2 needs rank >= 2, got {x.shape}")

    def bw(g):
        accumulate_grad(x, np.swapaxes(g, -1, -2))

    return make_op_output(np.ascontiguousarray(np.swapaxes(x.data, -1, -2)), (x,), bw)


def broadcast_batch(x: Tensor, batch: int) -> Tensor:
    """Tile a (C, H, W) tensor to (batch, C, H, W); adjoint sums over batch."""
    if batch < 1:
        raise ShapeError("batch must be >= 1")
    out = np.broadcast_to(x.data, (batch,) + x.shape).copy()

    def bw(g):
        accumulate_grad(x, g.sum(axis=0))

    return make_op_output(out, (x,), bw)


def concat_channels(xs: Sequence[Tensor], axis: int | None = None) -> Tensor:
    """Concatenate along the channel axis (dim 0 for CHW, dim 1 for BCHW)."""
    if not xs:
        raise ShapeError("concat_channels: empty input list")
    ax = _channel_axis(xs[0].ndim) if axis is None else axis
    ref = xs[0]
    for t in xs[1:]:
        if t.ndim != ref.ndim:
            raise ShapeError(f"concat_channels: ranks {ref.shape} vs {t.shape}")
        for d in range(ref.ndim):
            if d != ax and t.shape[d] != ref.shape[d]:
                raise ShapeError(
                    f"concat_channels: shapes {ref.shape} and {t.shape} "
                    f"differ outside axis {ax}")
    sizes = [t.shape[ax] for t in xs]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[ax] = slice(lo, hi)
            accumulate_grad(t, g[tuple(idx)])

    return make_op_output(np.concatenate([t.data for t in xs], axis=ax), tuple(xs), bw)


def split_channels(x: Tensor, sizes: Sequence[int], axis: int | None = None) -> list[Tensor]:
    """Split into contiguous channel ranges; exact inverse of concat_channels."""
    ax = _channel_axis(x.ndim) if axis is None else axis
    if sum(sizes) != x.shape[ax]:
        raise ShapeError(
            f"split_channels: sizes {list(sizes)} sum to {sum(sizes)}, "
            f"axis {ax} has {x.shape[ax]}")
    outs = []
    lo = 0
    for s in sizes:
        idx = [slice(None)] * x.ndim
        idx[ax] = slice(lo, lo + s)
        idx = tuple(idx)

        def bw(g, idx=idx):
            _accumulate_grad_slice(x, idx, g)

        outs.append(make_op_output(x.data[idx].copy(), (x,), bw))
        lo += s
    return outs


def _channel_axis(ndim: int) -> int:
    if ndim == 3:
        return 0
    if ndim == 4:
        return 1
    raise ShapeError(f"no channel axis convention for rank {ndim}")


# ---------------------------------------------------------------------------
# matmul / softmax


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product, or batched 3-D with matching batch dims."""
    if a.ndim != b.ndim or a.ndim not in (2, 3):
        raise ShapeError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or (a.ndim == 3 and a.shape[0] != b.shape[0]):
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            accumulate_grad(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            accumulate_grad(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return make_op_output(np.matmul(a.data, b.data), (a, b), bw)


def softmax(x: Tensor, axis: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        accumulate_grad(x, (g - dot) * y)

    return make_op_output(y.astype(x.data.dtype), (x,), bw)


# ---------------------------------------------------------------------------
# convolution


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, *,
           groups: int = 1, padding: int = 0, stride: int = 1) -> Tensor:
    """Grouped 2-D cross-correlation with zero padding.

    x: (B, Cin, H, W), w: (Cout, Cin/groups, kh, kw), b: (Cout,).
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input/weight, got {x.shape}, {w.shape}")
    B, cin, H, W = x.shape
    cout, cpg, kh, kw = w.shape
    if cin % groups or cout % groups:
        raise ConfigError(
            f"conv2d: channels in={cin} out={cout} not divisible by groups={groups}")
    if cpg != cin // groups:
        raise ShapeError(
            f"conv2d: weight expects {cpg} channels/group, input provides {cin // groups}")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({cout},)")

    p, s = int(padding), int(stride)
    oh = (H + 2 * p - kh) // s + 1
    ow = (W + 2 * p - kw) // s + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} too large for input {H}x{W} (pad {p})")

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = np.empty((B, cin, kh, kw, oh, ow), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + s * oh:s, j:j + s * ow:s]
    cols = cols.reshape(B, groups, cpg * kh * kw, oh * ow)
    wg = w.data.reshape(groups, cout // groups, cpg * kh * kw)

    out = np.matmul(wg[None], cols).reshape(B, cout, oh, ow)
    if b is not None:
        out = out + b.data.reshape(1, cout, 1, 1)

    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        gg = g.reshape(B, groups, cout // groups, oh * ow)
        if w.requires_grad:
            dw = np.matmul(gg, np.swapaxes(cols, -1, -2)).sum(axis=0)
            accumulate_grad(w, dw.reshape(w.shape))
        if b is not None and b.requires_grad:
            accumulate_grad(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = np.matmul(np.swapaxes(wg, -1, -2)[None], gg)
            dcols = dcols.reshape(B, cin, kh, kw, oh, ow)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + s * oh:s, j:j + s * ow:s] += dcols[:, :, i, j]
            accumulate_grad(x, gxp[:, :, p:p + H, p:p + W] if p else gxp)

    return make_op_output(out, parents, bw)


# ---------------------------------------------------------------------------
# bilinear resize


def _resize_axis(n_in: int, n_out: int):
    """Half-pixel-center source coordinates: low index, high index, fraction."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Differentiable bilinear interpolation with half-pixel centers."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize: invalid output size {out_h}x{out_w}")
    if x.ndim < 2:
        raise ShapeError(f"bilinear_resize: need rank >= 2, got {x.shape}")
    H, W = x.shape[-2:]
    if (out_h, out_w) == (H, W):
        def bw_id(g):
            accumulate_grad(x, g)
        return make_op_output(x.data.copy(), (x,), bw_id)

    iy0, iy1, fy = _resize_axis(H, out_h)
    ix0, ix1, fx = _resize_axis(W, out_w)
    lead = x.shape[:-2]
    flat = x.data.reshape((-1, H, W))
    fy_c = fy[:, None].astype(x.data.dtype)
    fx_c = fx[None, :].astype(x.data.dtype)

    top = flat[:, iy0[:, None], ix0[None, :]] * (1 - fx_c) + flat[:, iy0[:, None], ix1[None, :]] * fx_c
    bot = flat[:, iy1[:, None], ix0[None, :]] * (1 - fx_c) + flat[:, iy1[:, None], ix1[None, :]] * fx_c
    out = top * (1 - fy_c) + bot * fy_c

    def bw(g):
        g2 = g.reshape((-1, out_h, out_w))
        n = g2.shape[0]
        gx = np.zeros((n, H, W), dtype=x.data.dtype)
        bidx = np.arange(n)[:, None, None]
        for iy, wy in ((iy0, 1 - fy_c), (iy1, fy_c)):
            for ix, wx in ((ix0, 1 - fx_c), (ix1, fx_c)):
                np.add.at(gx, (bidx, iy[None, :, None], ix[None, None, :]), g2 * wy * wx)
        accumulate_grad(x, gx.reshape(x.shape))

    return make_op_output(out.reshape(lead + (out_h, out_w)), (x,), bw)


# ---------------------------------------------------------------------------
# normalization


def standardize_spatial(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean / unit-variance per slice over the trailing (H, W) dims."""
    if x.ndim < 3:
        raise ShapeError(f"standardize_spatial: need rank >= 3, got {x.shape}")
    ax = (-2, -1)
    mu = x.data.mean(axis=ax, keepdims=True)
    var = x.data.var(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x.data - mu) * inv

    def bw(g):
        gm = g.mean(axis=ax, keepdims=True)
        gy = (g * y).mean(axis=ax, keepdims=True)
        accumulate_grad(x, (g - gm - y * gy) * inv)

    return make_op_output(y.astype(x.data.dtype), (x,), bw)
