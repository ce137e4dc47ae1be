"""Differentiable operations over :class:`Tensor` with analytic backwards.

Every op takes an optional ``tape``; without one it is a plain forward
evaluation (inference mode).  Gradient formulas are exact, which is what
the finite-difference suite checks against.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError
from .tensor import GradTape, Tensor


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def add(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data + b.data)
    if tape is not None:
        def bwd(g):
            a.add_grad(g)
            b.add_grad(g)
        tape.record(out, bwd)
    return out


def scale(x: Tensor, c: float, tape: GradTape | None = None) -> Tensor:
    out = Tensor(x.data * c)
    if tape is not None:
        tape.record(out, lambda g: x.add_grad(g * c))
    return out


def mul(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data * b.data)
    if tape is not None:
        def bwd(g):
            a.add_grad(g * b.data)
            b.add_grad(g * a.data)
        tape.record(out, bwd)
    return out


def matmul(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: inner dims {a.data.shape[-1]} and {b.data.shape[0]} differ")
    out = Tensor(a.data @ b.data)
    if tape is not None:
        def bwd(g):
            a.add_grad(g @ b.data.T)
            b.add_grad(a.data.T @ g)
        tape.record(out, bwd)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    """Affine map ``x @ w + b`` for ``x (n,k)``, ``w (k,m)``, ``b (m,)``."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise DimensionError(
            f"linear: input dim {x.data.shape[-1]} vs weight dim {w.data.shape[0]}")
    out = Tensor(x.data @ w.data + b.data)
    if tape is not None:
        def bwd(g):
            x.add_grad(g @ w.data.T)
            w.add_grad(x.data.T @ g)
            b.add_grad(g.sum(axis=0) if g.ndim > 1 else g)
        tape.record(out, bwd)
    return out


def reshape(x: Tensor, shape, tape: GradTape | None = None) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    if tape is not None:
        tape.record(out, lambda g: x.add_grad(g.reshape(x.data.shape)))
    return out


def permute(x: Tensor, axes, tape: GradTape | None = None) -> Tensor:
    inv = tuple(int(i) for i in np.argsort(axes))
    out = Tensor(x.data.transpose(axes))
    if tape is not None:
        tape.record(out, lambda g: x.add_grad(g.transpose(inv)))
    return out


def transpose(x: Tensor, tape: GradTape | None = None) -> Tensor:
    return permute(x, (1, 0), tape)


def concat(parts: list[Tensor], tape: GradTape | None = None) -> Tensor:
    """Concatenate along axis 0."""
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    if tape is not None:
        sizes = [p.data.shape[0] for p in parts]
        def bwd(g):
            at = 0
            for p, n in zip(parts, sizes):
                p.add_grad(g[at:at + n])
                at += n
        tape.record(out, bwd)
    return out


def gather_rows(x: Tensor, idx, tape: GradTape | None = None) -> Tensor:
    """Select rows ``x[idx]``; backward scatter-adds into the source."""
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(x.data[idx])
    if tape is not None:
        def bwd(g):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, idx, g)
        tape.record(out, bwd)
    return out


def mean_rows(x: Tensor, tape: GradTape | None = None) -> Tensor:
    """Mean over axis 0 of a 2-D tensor."""
    n = x.data.shape[0]
    out = Tensor(x.data.mean(axis=0))
    if tape is not None:
        tape.record(out, lambda g: x.add_grad(np.repeat(g[None, :] / n, n, axis=0)))
    return out


def silu(x: Tensor, tape: GradTape | None = None) -> Tensor:
    """x * sigmoid(x); derivative s + x*s*(1-s)."""
    s = _sigmoid(x.data)
    out = Tensor(x.data * s)
    if tape is not None:
        tape.record(out, lambda g: x.add_grad(g * (s + x.data * s * (1.0 - s))))
    return out


def softmax(x: Tensor, tape: GradTape | None = None) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s)
    if tape is not None:
        def bwd(g):
            dot = (g * s).sum(axis=-1, keepdims=True)
            x.add_grad(s * (g - dot))
        tape.record(out, bwd)
    return out


def softmax_cross_entropy(logits: Tensor, target, tape: GradTape | None = None) -> Tensor:
    """Negative log softmax probability of the target class(es).

    1-D logits with an integer target give a single scalar; 2-D logits
    ``(n, K)`` with an integer vector give the sum over rows.  Backward is
    ``softmax(logits) - onehot(target)``.
    """
    l = logits.data
    if l.ndim == 1:
        k = l.shape[0]
        t = int(target)
        if not 0 <= t < k:
            raise IndexError(f"target {t} outside [0, {k})")
        m = l.max()
        lse = m + np.log(np.exp(l - m).sum())
        out = Tensor(lse - l[t])
        if tape is not None:
            def bwd(g):
                p = np.exp(l - lse)
                p[t] -= 1.0
                logits.add_grad(g * p)
            tape.record(out, bwd)
        return out
    if l.ndim == 2:
        n, k = l.shape
        t = np.asarray(target, dtype=np.intp)
        if t.shape != (n,):
            raise DimensionError(f"targets shape {t.shape} for logits {l.shape}")
        if t.size and (t.min() < 0 or t.max() >= k):
            raise IndexError(f"target outside [0, {k})")
        m = l.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(l - m).sum(axis=1, keepdims=True))
        out = Tensor((lse[:, 0] - l[np.arange(n), t]).sum())
        if tape is not None:
            def bwd(g):
                p = np.exp(l - lse)
                p[np.arange(n), t] -= 1.0
                logits.add_grad(g * p)
            tape.record(out, bwd)
        return out
    raise DimensionError(f"logits must be 1-D or 2-D, got shape {l.shape}")


def mse(pred: Tensor, target: Tensor, tape: GradTape | None = None) -> Tensor:
    """Sum of squared differences over all elements (not the mean)."""
    if pred.shape != target.shape:
        raise DimensionError(f"mse: shapes {pred.shape} and {target.shape} differ")
    d = pred.data - target.data
    out = Tensor((d * d).sum())
    if tape is not None:
        def bwd(g):
            pred.add_grad(2.0 * g * d)
            target.add_grad(-2.0 * g * d)
        tape.record(out, bwd)
    return out


def conv3d(x: Tensor, kernel: Tensor, bias: Tensor,
           stride: tuple[int, int, int] = (1, 1, 1),
           padding: tuple[int, int, int] = (0, 0, 0),
           tape: GradTape | None = None) -> Tensor:
    """3-D cross-correlation of ``x (Cin,T,H,W)`` with ``kernel (Cout,Cin,kt,kh,kw)``.

    Output extent per axis is ``floor((n + 2p - k) / s) + 1``; no implicit
    padding.  Backward yields gradients for input, kernel, and bias.
    """
    ci, t_in, h_in, w_in = x.data.shape
    co, ci_k, kt, kh, kw = kernel.data.shape
    if ci_k != ci:
        raise DimensionError(f"channel: input has {ci} channels, kernel expects {ci_k}")
    if bias.data.shape != (co,):
        raise DimensionError(f"channel: bias shape {bias.data.shape}, expected ({co},)")
    st, sh, sw = stride
    pt, ph, pw = padding
    for axis, n, k, s, p in (("temporal", t_in, kt, st, pt),
                             ("height", h_in, kh, sh, ph),
                             ("width", w_in, kw, sw, pw)):
        if s < 1:
            raise DimensionError(f"{axis}: stride {s} < 1")
        if n + 2 * p < k:
            raise DimensionError(f"{axis}: kernel {k} exceeds padded extent {n + 2 * p}")

    xp = np.pad(x.data, ((0, 0), (pt, pt), (ph, ph), (pw, pw))) if (pt or ph or pw) else x.data
    win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))[:, ::st, ::sh, ::sw]
    out_data = np.tensordot(kernel.data, win, axes=([1, 2, 3, 4], [0, 4, 5, 6]))
    out = Tensor(out_data + bias.data[:, None, None, None])
    if tape is not None:
        to, ho, wo = out_data.shape[1:]
        def bwd(g):
            bias.add_grad(g.sum(axis=(1, 2, 3)))
            kernel.add_grad(np.tensordot(g, win, axes=([1, 2, 3], [1, 2, 3])))
            gx = np.zeros_like(xp)
            for i in range(kt):
                for j in range(kh):
                    for l in range(kw):
                        contrib = np.tensordot(kernel.data[:, :, i, j, l], g, axes=([0], [0]))
                        gx[:, i:i + to * st:st, j:j + ho * sh:sh, l:l + wo * sw:sw] += contrib
            x.add_grad(gx[:, pt:pt + t_in, ph:ph + h_in, pw:pw + w_in])
        tape.record(out, bwd)
    return out
