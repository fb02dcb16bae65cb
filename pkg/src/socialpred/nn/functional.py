"""Forward and backward kernels on ``(batch, channels, time)`` float64 arrays."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check(x: np.ndarray, in_ch: int, what: str) -> None:
    if x.ndim != 3:
        raise ValueError(f"{what}: expected (batch, channels, time), got shape {x.shape}")
    if x.shape[1] != in_ch:
        raise ValueError(f"{what}: expected {in_ch} input channels, got {x.shape[1]}")
    if x.shape[2] < 1:
        raise ValueError(f"{what}: empty time axis")


def same_padding(k: int) -> tuple[int, int]:
    return (k - 1) // 2, k // 2


def _cols(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """im2col: ``(B*T_out, C*k)`` patches of a padded input."""
    B, C, _ = xp.shape
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]  # (B, C, T_out, k)
    T_out = win.shape[2]
    return np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B * T_out, C * k), T_out


def conv1d(x, w, b=None, stride: int = 1, pad=(0, 0)):
    """Cross-correlation with weights ``(out_ch, in_ch, k)``.

    Returns ``(y, cache)``; the cache feeds :func:`conv1d_grad`.
    """
    O, C, k = w.shape
    _check(x, C, "conv1d")
    xp = np.pad(x, ((0, 0), (0, 0), tuple(pad)))
    if xp.shape[2] < k:
        raise ValueError(f"conv1d: padded length {xp.shape[2]} shorter than kernel {k}")
    cols, T_out = _cols(xp, k, stride)
    y = cols @ w.reshape(O, C * k).T
    y = y.reshape(x.shape[0], T_out, O).transpose(0, 2, 1)
    if b is not None:
        y = y + b[None, :, None]
    return np.ascontiguousarray(y), (cols, x.shape, stride, tuple(pad))


def conv1d_grad(cache, w, dy):
    """Gradients ``(dx, dw, db)`` of :func:`conv1d`."""
    cols, x_shape, stride, pad = cache
    O, C, k = w.shape
    B, _, T = x_shape
    T_out = dy.shape[2]
    dyr = dy.transpose(0, 2, 1).reshape(B * T_out, O)
    dw = (dyr.T @ cols).reshape(O, C, k)
    db = dy.sum(axis=(0, 2))
    dcols = (dyr @ w.reshape(O, C * k)).reshape(B, T_out, C, k)
    Tp = T + pad[0] + pad[1]
    dxp = np.zeros((B, C, Tp))
    span = stride * (T_out - 1) + 1
    for j in range(k):
        dxp[:, :, j : j + span : stride] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dxp[:, :, pad[0] : pad[0] + T], dw, db


def conv_transpose1d(x, w, b=None, stride: int = 2, crop=None):
    """Transposed convolution with weights ``(in_ch, out_ch, k)``.

    The full output has ``stride*(T-1) + k`` frames; ``crop`` (default: split
    ``k - stride`` as evenly as possible, extra on the right) trims it so the
    output is ``stride * T`` frames long.
    """
    C, O, k = w.shape
    _check(x, C, "conv_transpose1d")
    if crop is None:
        total = max(k - stride, 0)
        crop = (total // 2, total - total // 2)
    B, _, T = x.shape
    L = stride * (T - 1) + k
    xr = x.transpose(0, 2, 1).reshape(B * T, C)
    contrib = (xr @ w.reshape(C, O * k)).reshape(B, T, O, k)
    full = np.zeros((B, O, L))
    span = stride * (T - 1) + 1
    for j in range(k):
        full[:, :, j : j + span : stride] += contrib[:, :, :, j].transpose(0, 2, 1)
    y = full[:, :, crop[0] : L - crop[1]]
    if b is not None:
        y = y + b[None, :, None]
    return np.ascontiguousarray(y), (xr, x.shape, stride, tuple(crop))


def conv_transpose1d_grad(cache, w, dy):
    xr, x_shape, stride, crop = cache
    C, O, k = w.shape
    B, _, T = x_shape
    dyf = np.pad(dy, ((0, 0), (0, 0), crop))
    G, T_in = _cols(dyf, k, stride)  # (B*T, O*k)
    assert T_in == T
    dx = (G @ w.reshape(C, O * k).T).reshape(B, T, C).transpose(0, 2, 1)
    dw = (xr.T @ G).reshape(C, O, k)
    db = dy.sum(axis=(0, 2))
    return np.ascontiguousarray(dx), dw, db


def maxpool1d(x, stride: int = 2):
    """Non-overlapping max pooling; trailing frames that do not fill a window are dropped."""
    B, C, T = x.shape
    T_out = T // stride
    if T_out < 1:
        raise ValueError(f"maxpool1d: time length {T} shorter than stride {stride}")
    xr = x[:, :, : T_out * stride].reshape(B, C, T_out, stride)
    arg = xr.argmax(axis=3)
    y = np.take_along_axis(xr, arg[..., None], axis=3)[..., 0]
    return y, (arg, x.shape, stride)


def maxpool1d_grad(cache, dy):
    arg, x_shape, stride = cache
    B, C, T = x_shape
    T_out = dy.shape[2]
    dx = np.zeros((B, C, T_out, stride))
    np.put_along_axis(dx, arg[..., None], dy[..., None], axis=3)
    out = np.zeros(x_shape)
    out[:, :, : T_out * stride] = dx.reshape(B, C, T_out * stride)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def dropout(x, p: float, train: bool, rng: np.random.Generator | None):
    """Inverted dropout. Returns ``(y, mask)``; ``mask`` is None in eval mode."""
    if not train or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in train mode needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask
