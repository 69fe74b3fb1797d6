"""Dense-tensor engine with reverse-mode automatic differentiation.

Implements exactly the operations a 1-D convolutional classifier needs:
conv1d, leaky ReLU, global average pooling, a dense layer, and a
softmax + sparse cross-entropy loss. Operations optionally record onto a
GradTape; backward() replays the tape in reverse to accumulate gradients
into every tensor marked trainable.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class Tensor:
    """A dense float64 array plus an accumulated gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy(), requires_grad=self.requires_grad)
        return t

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _OpRecord:
    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: Tensor, inputs: tuple, backward_fn: Callable):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class GradTape:
    """Ordered record of executed operations for one forward pass.

    Each record holds the output tensor, the input tensors, and a rule
    mapping the output gradient to per-input gradients. Replaying the
    records in reverse visits every operation exactly once; gradients
    accumulate additively when a tensor feeds multiple consumers.
    """

    def __init__(self):
        self.records: list[_OpRecord] = []

    def record(self, output: Tensor, inputs: tuple, backward_fn: Callable) -> None:
        self.records.append(_OpRecord(output, inputs, backward_fn))

    def __len__(self) -> int:
        return len(self.records)


def backward(tape: GradTape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into .grad of every trainable tensor.

    The loss must be a scalar produced on the tape. Tensors with
    requires_grad=False receive no gradient. The tape is consumed: records
    are released as they are replayed so activation memory frees eagerly.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    records = tape.records
    for i in range(len(records) - 1, -1, -1):
        rec = records[i]
        records[i] = None
        g_out = flowing.pop(id(rec.output), None)
        if g_out is None:
            continue
        input_grads = rec.backward_fn(g_out)
        for t, g in zip(rec.inputs, input_grads):
            if g is None:
                continue
            key = id(t)
            if key in flowing:
                flowing[key] = flowing[key] + g
            else:
                flowing[key] = g
            if t.requires_grad:
                t.grad = g.copy() if t.grad is None else t.grad + g
    tape.records = []


def _check_padding(mode: str) -> None:
    if mode not in ("same", "valid"):
        raise ValueError(f"padding must be 'same' or 'valid', got {mode!r}")


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, padding: str = "same",
           tape: Optional[GradTape] = None) -> Tensor:
    """Cross-correlation of a (batched) multichannel signal with a filter bank.

    x: [C_in, L] for one sample or [C_in, B, L] for a batch (channels first,
    so the kernel-position GEMMs run on contiguous memory);
    weight: [C_out, C_in, K]; bias: [C_out].
    Same-padding keeps L_out == L; valid gives L_out == L - K + 1.
    """
    _check_padding(padding)
    single = x.data.ndim == 2
    xd = x.data[:, None, :] if single else x.data
    if xd.ndim != 3 or weight.data.ndim != 3 or bias.data.ndim != 1:
        raise ValueError(
            f"conv1d expects x [C,L] or [C,B,L], weight [C_out,C_in,K], "
            f"bias [C_out]; got {x.data.shape}, {weight.data.shape}, "
            f"{bias.data.shape}")
    C_in, B, L = xd.shape
    C_out, C_in_w, K = weight.data.shape
    if C_in != C_in_w:
        raise ValueError(
            f"channel mismatch: input has shape {tuple(x.data.shape)} "
            f"(C_in={C_in}) but weights have shape {tuple(weight.data.shape)} "
            f"(C_in={C_in_w})")
    if bias.data.shape[0] != C_out:
        raise ValueError(f"bias length {bias.data.shape[0]} != C_out {C_out}")
    if padding == "same":
        pad_l = (K - 1) // 2
        pad_r = K - 1 - pad_l
    else:
        pad_l = pad_r = 0
    if K > L + pad_l + pad_r:
        raise ValueError(f"kernel size {K} exceeds padded length {L + pad_l + pad_r}")
    L_out = L if padding == "same" else L - K + 1
    Lp = L + pad_l + pad_r

    xpad = np.pad(xd, ((0, 0), (0, 0), (pad_l, pad_r)))
    # one GEMM for all kernel positions, then shift-adds of the k-blocks:
    # out[:, :, i] = sum_k (W_k @ xpad)[:, :, i + k] + bias
    w_stack = weight.data.transpose(2, 0, 1).reshape(K * C_out, C_in)
    y = (w_stack @ xpad.reshape(C_in, B * Lp)).reshape(K, C_out, B, Lp)
    out = np.zeros((C_out, B, L_out))
    for k in range(K):
        out += y[k, :, :, k:k + L_out]
    out += bias.data[:, None, None]
    result = Tensor(out[:, 0, :] if single else out)

    if tape is not None:
        w = weight

        def bwd(g: np.ndarray):
            gb = g[:, None, :] if single else g                # [C_out, B, L_out]
            db = gb.sum(axis=(1, 2))
            gb = np.ascontiguousarray(gb)
            g2 = gb.reshape(C_out, B * L_out)
            # dxpad[:, :, i + k] += W_k^T @ g[:, :, i], all k in one GEMM
            wt_stack = w.data.transpose(2, 1, 0).reshape(K * C_in, C_out)
            z = (wt_stack @ g2).reshape(K, C_in, B, L_out)
            dxpad = np.zeros((C_in, B, Lp))
            for k in range(K):
                dxpad[:, :, k:k + L_out] += z[k]
            dx = dxpad[:, :, pad_l:pad_l + L]
            # dw[:, :, k] = g2 @ shifted-x^T, all k as one stacked GEMM
            xsh = np.empty((K, C_in, B, L_out))
            for k in range(K):
                xsh[k] = xpad[:, :, k:k + L_out]
            dw = (g2 @ xsh.reshape(K * C_in, B * L_out).T).reshape(C_out, K, C_in)
            dw = dw.transpose(0, 2, 1).copy()
            if single:
                dx = dx[:, 0, :]
            return dx, dw, db

        tape.record(result, (x, weight, bias), bwd)
    return result


def leaky_relu(x: Tensor, alpha: float = 0.01, tape: Optional[GradTape] = None) -> Tensor:
    """Elementwise max(x, alpha * x); alpha must be non-negative."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    scaled = alpha * x.data
    out = Tensor(np.maximum(x.data, scaled))
    if tape is not None:
        took_x = x.data >= scaled
        tape.record(out, (x,), lambda g: (np.where(took_x, g, alpha * g),))
    return out


def global_avg_pool(x: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    """Mean over the time axis: [C, L] -> [C], or batched [C, B, L] -> [B, C]
    (the batched form also flips to features-last for the dense head)."""
    L = x.data.shape[-1]
    if L < 1:
        raise ValueError("cannot pool over an empty time axis")
    single = x.data.ndim == 2
    pooled = x.data.mean(axis=-1)
    out = Tensor(pooled if single else pooled.T)
    if tape is not None:
        if single:
            def bwd(g):
                return (np.repeat(g[..., None], L, axis=-1) / L,)
        else:
            def bwd(g):
                return (np.repeat(g.T[..., None], L, axis=-1) / L,)
        tape.record(out, (x,), bwd)
    return out


def dense(x: Tensor, weight: Tensor, bias: Tensor,
          tape: Optional[GradTape] = None) -> Tensor:
    """Affine map weight @ x + bias; x: [D] or [B, D], weight: [M, D]."""
    D = x.data.shape[-1]
    M, D_w = weight.data.shape
    if D != D_w:
        raise ValueError(
            f"dimension mismatch: input shape {tuple(x.data.shape)} (D={D}) "
            f"vs weight shape {tuple(weight.data.shape)} (D={D_w})")
    if bias.data.shape[0] != M:
        raise ValueError(f"bias length {bias.data.shape[0]} != M {M}")
    out = Tensor(x.data @ weight.data.T + bias.data)
    if tape is not None:
        single = x.data.ndim == 1

        def bwd(g: np.ndarray):
            if single:
                dx = g @ weight.data
                dw = np.outer(g, x.data)
                db = g.copy()
            else:
                dx = g @ weight.data
                dw = g.T @ x.data
                db = g.sum(axis=0)
            return dx, dw, db

        tape.record(out, (x, weight, bias), bwd)
    return out


def cross_entropy(logits: Tensor, labels, tape: Optional[GradTape] = None) -> Tensor:
    """Softmax + sparse categorical cross-entropy, averaged over the batch.

    logits: [M] with an integer label, or [B, M] with labels of length B.
    Stabilized by max subtraction so large logits cannot overflow.
    """
    single = logits.data.ndim == 1
    z = logits.data[None] if single else logits.data
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    B, M = z.shape
    if y.shape != (B,):
        raise ValueError(f"labels shape {y.shape} incompatible with logits {z.shape}")
    if np.any(y < 0) or np.any(y >= M):
        bad = y[(y < 0) | (y >= M)]
        raise ValueError(f"label(s) {bad.tolist()} out of range [0, {M})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    per_sample = log_norm - shifted[np.arange(B), y]
    out = Tensor(per_sample.mean())
    if tape is not None:
        def bwd(g: np.ndarray):
            p = np.exp(shifted)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(B), y] -= 1.0
            dz = (float(g) / B) * p
            return (dz[0] if single else dz,)

        tape.record(out, (logits,), bwd)
    return out


def reduce_sum(x: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = Tensor(x.data.sum())
    if tape is not None:
        tape.record(out, (x,), lambda g: (np.full_like(x.data, float(g)),))
    return out


def add(a: Tensor, b: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g.copy(), g.copy()))
    return out
