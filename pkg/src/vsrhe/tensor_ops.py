"""Dense float32 tensor kernels for the SR network and loss stack.

Everything here operates on plain numpy float32 arrays and is a pure
function: same inputs give bit-identical outputs across calls and
process restarts. Accumulation happens through a fixed evaluation
order (im2col + one matmul for convolution, numpy matmul elsewhere),
so repeated runs on the same machine reproduce exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "conv2d",
    "matmul",
    "softmax",
    "layer_norm",
    "gelu",
    "pixel_shuffle",
    "window_partition",
    "window_merge",
]

_SQRT2 = np.float32(np.sqrt(2.0))


def _as_f32(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float32)


def conv2d(x, kernel, bias, stride: int = 1, padding: int = 0,
           pad_mode: str = "zero") -> np.ndarray:
    """2-D convolution (cross-correlation) of x[C_in,H,W] with kernel[C_out,C_in,kH,kW].

    Direct evaluation via im2col; no FFT. kH and kW must be odd.
    """
    x = _as_f32(x)
    kernel = _as_f32(kernel)
    bias = _as_f32(bias)
    if x.ndim != 3:
        raise ValueError(f"conv2d input must be 3-D [C,H,W], got shape {x.shape}")
    if kernel.ndim != 4:
        raise ValueError(f"conv2d kernel must be 4-D [C_out,C_in,kH,kW], got shape {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel spatial dims must be odd, got {kh}x{kw}")
    if x.shape[0] != c_in:
        raise ValueError(
            f"input channel dim {x.shape[0]} does not match kernel C_in {c_in}")
    if bias.shape != (c_out,):
        raise ValueError(f"bias shape {bias.shape} does not match C_out {c_out}")
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be non-negative, got {padding}")
    _, h, w = x.shape
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError(
            f"padded input {h + 2 * padding}x{w + 2 * padding} smaller than kernel {kh}x{kw}")

    if padding > 0:
        if pad_mode == "zero":
            x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
        elif pad_mode == "reflect":
            x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)), mode="reflect")
        else:
            raise ValueError(f"unknown pad_mode {pad_mode!r}")

    _, hp, wp = x.shape
    out_h = (hp - kh) // stride + 1
    out_w = (wp - kw) // stride + 1

    # im2col, kernel-row-major tap order to match the kernel layout
    cols = np.empty((c_in, kh, kw, out_h, out_w), dtype=np.float32)
    for a in range(kh):
        for b in range(kw):
            cols[:, a, b] = x[:, a:a + stride * out_h:stride, b:b + stride * out_w:stride]
    cols = cols.reshape(c_in * kh * kw, out_h * out_w)
    out = kernel.reshape(c_out, c_in * kh * kw) @ cols
    out += bias[:, None]
    return out.reshape(c_out, out_h, out_w)


def matmul(a, b) -> np.ndarray:
    """Batched matrix product a[...,M,K] @ b[...,K,N].

    Leading batch dims must be identical; no broadcasting.
    """
    a = _as_f32(a)
    b = _as_f32(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(
            f"inner dimensions do not match: {a.shape[-1]} vs {b.shape[-2]}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ValueError(
            f"batch dimensions differ: {a.shape[:-2]} vs {b.shape[:-2]}")
    return np.matmul(a, b)


def softmax(t, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along `axis` (max-subtracted)."""
    t = _as_f32(t)
    if not -t.ndim <= axis < t.ndim:
        raise ValueError(f"axis {axis} out of range for {t.ndim}-D tensor")
    shifted = t - np.max(t, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def layer_norm(t, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Layer normalization over the trailing channel axis, then affine."""
    t = _as_f32(t)
    gamma = _as_f32(gamma)
    beta = _as_f32(beta)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    c = t.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(
            f"gamma/beta must have shape ({c},), got {gamma.shape} and {beta.shape}")
    mean = np.mean(t, axis=-1, keepdims=True)
    var = np.mean((t - mean) ** 2, axis=-1, keepdims=True)
    return (t - mean) / np.sqrt(var + np.float32(eps)) * gamma + beta


def gelu(t) -> np.ndarray:
    """Exact GELU, x * Phi(x) via erf (not the tanh approximation)."""
    t = _as_f32(t)
    return (t * np.float32(0.5) * (np.float32(1.0) + erf(t / _SQRT2))).astype(np.float32)


def pixel_shuffle(t, r: int) -> np.ndarray:
    """Sub-pixel rearrangement [C*r*r,H,W] -> [C,H*r,W*r].

    output(c, h*r+i, w*r+j) = input(c*r*r + i*r + j, h, w)
    """
    t = _as_f32(t)
    if t.ndim != 3:
        raise ValueError(f"pixel_shuffle input must be 3-D, got shape {t.shape}")
    if r < 1:
        raise ValueError(f"upscale factor must be positive, got {r}")
    cr2, h, w = t.shape
    if cr2 % (r * r) != 0:
        raise ValueError(
            f"channel count {cr2} not divisible by r^2 = {r * r}")
    c = cr2 // (r * r)
    return (t.reshape(c, r, r, h, w)
             .transpose(0, 3, 1, 4, 2)
             .reshape(c, h * r, w * r))


def pixel_unshuffle(t, r: int) -> np.ndarray:
    """Inverse of pixel_shuffle: [C,H*r,W*r] -> [C*r*r,H,W]."""
    t = _as_f32(t)
    if t.ndim != 3:
        raise ValueError(f"pixel_unshuffle input must be 3-D, got shape {t.shape}")
    c, hr, wr = t.shape
    if hr % r != 0 or wr % r != 0:
        raise ValueError(f"spatial dims {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    return (t.reshape(c, h, r, w, r)
             .transpose(0, 2, 4, 1, 3)
             .reshape(c * r * r, h, w))


def window_partition(t, w: int) -> np.ndarray:
    """Split t[C,H,W] into non-overlapping w x w windows -> [nW, w*w, C].

    Windows are ordered raster-major; tokens within a window row-major.
    """
    t = _as_f32(t)
    if t.ndim != 3:
        raise ValueError(f"window_partition input must be 3-D, got shape {t.shape}")
    c, h, width = t.shape
    if h % w != 0 or width % w != 0:
        pad_h = (-h) % w
        pad_w = (-width) % w
        raise ValueError(
            f"grid {h}x{width} not divisible by window {w}; "
            f"pad by {pad_h} rows and {pad_w} cols first")
    nh, nw = h // w, width // w
    return (t.reshape(c, nh, w, nw, w)
             .transpose(1, 3, 2, 4, 0)
             .reshape(nh * nw, w * w, c))


def window_merge(windows, w: int, h: int, width: int) -> np.ndarray:
    """Inverse of window_partition: [nW, w*w, C] -> [C, h, width]."""
    windows = _as_f32(windows)
    if windows.ndim != 3:
        raise ValueError(f"window_merge input must be 3-D, got shape {windows.shape}")
    if h % w != 0 or width % w != 0:
        raise ValueError(f"target grid {h}x{width} not divisible by window {w}")
    nh, nw = h // w, width // w
    n_win, tokens, c = windows.shape
    if n_win != nh * nw or tokens != w * w:
        raise ValueError(
            f"window tensor {windows.shape} inconsistent with grid {h}x{width}, window {w}")
    return (windows.reshape(nh, nw, w, w, c)
                   .transpose(4, 0, 2, 1, 3)
                   .reshape(c, h, width))
