"""Separable spatial resampling: bicubic, Lanczos, and nearest-neighbor.

Coordinate convention is pixel-center alignment:
    src = (dst + 0.5) * (in_size / out_size) - 0.5
Kernel taps are renormalized to sum to 1 at every output position, edges
are handled by clamping source indices, and downscaling widens the kernel
support by the scale factor (anti-aliased).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frame_io import C420, Frame, VideoSequence, round_half_away

__all__ = ["KernelSpec", "resample_plane", "downscale_video", "upscale_video", "axis_weights"]


@dataclass(frozen=True)
class KernelSpec:
    """Resampling kernel family plus its shape parameter."""

    family: str  # bicubic_a | lanczos_a | nearest
    parameter: float = 0.0

    def __post_init__(self):
        if self.family == "bicubic_a":
            if not (-1.0 <= self.parameter < 0.0):
                raise ValueError(f"bicubic a must be in [-1,0), got {self.parameter}")
        elif self.family == "lanczos_a":
            if self.parameter not in (2, 3, 4):
                raise ValueError(f"lanczos lobes must be 2, 3 or 4, got {self.parameter}")
        elif self.family == "nearest":
            pass
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")

    @staticmethod
    def bicubic(a: float = -0.5) -> "KernelSpec":
        return KernelSpec("bicubic_a", a)

    @staticmethod
    def lanczos(lobes: int = 3) -> "KernelSpec":
        return KernelSpec("lanczos_a", lobes)

    @staticmethod
    def nearest() -> "KernelSpec":
        return KernelSpec("nearest")

    @property
    def radius(self) -> float:
        if self.family == "bicubic_a":
            return 2.0
        if self.family == "lanczos_a":
            return float(self.parameter)
        return 0.5

    def weight(self, x: float) -> float:
        ax = abs(x)
        if self.family == "bicubic_a":
            a = self.parameter
            if ax <= 1.0:
                return (a + 2.0) * ax ** 3 - (a + 3.0) * ax ** 2 + 1.0
            if ax < 2.0:
                return a * ax ** 3 - 5.0 * a * ax ** 2 + 8.0 * a * ax - 4.0 * a
            return 0.0
        if self.family == "lanczos_a":
            a = self.parameter
            if ax >= a:
                return 0.0
            if ax < 1e-12:
                return 1.0
            px = math.pi * ax
            return a * math.sin(px) * math.sin(px / a) / (px * px)
        # nearest
        return 1.0 if ax <= 0.5 else 0.0


def axis_weights(in_n: int, out_n: int, kernel: KernelSpec) -> np.ndarray:
    """Dense (out_n, in_n) float32 weight matrix for one axis.

    Rows sum to 1 (renormalized). Source indices are clamped at the edges,
    which folds out-of-range tap weight onto the border samples.
    """
    if out_n < 1 or in_n < 1:
        raise ValueError(f"axis sizes must be positive, got {in_n} -> {out_n}")
    scale = in_n / out_n
    # widen support when minifying
    fscale = max(scale, 1.0)
    support = kernel.radius * fscale
    w = np.zeros((out_n, in_n), dtype=np.float64)
    for o in range(out_n):
        src = (o + 0.5) * scale - 0.5
        if kernel.family == "nearest":
            idx = min(in_n - 1, max(0, int(math.floor(src + 0.5))))
            w[o, idx] = 1.0
            continue
        lo = int(math.ceil(src - support))
        hi = int(math.floor(src + support))
        total = 0.0
        for t in range(lo, hi + 1):
            wt = kernel.weight((t - src) / fscale)
            if wt == 0.0:
                continue
            idx = min(in_n - 1, max(0, t))
            w[o, idx] += wt
            total += wt
        if total == 0.0:  # degenerate support; fall back to nearest sample
            idx = min(in_n - 1, max(0, int(round(src))))
            w[o, idx] = 1.0
        else:
            w[o] /= total
    return w.astype(np.float32)


def resample_plane(plane, out_w: int, out_h: int, kernel: KernelSpec) -> np.ndarray:
    """Resample a 2-D grid to out_h x out_w, separably (horizontal then vertical).

    Returns float32; quantization is the caller's business.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output dimensions must be positive, got {out_w}x{out_h}")
    plane = np.asarray(plane, dtype=np.float32)
    if plane.ndim != 2:
        raise ValueError(f"plane must be 2-D, got shape {plane.shape}")
    in_h, in_w = plane.shape
    wh = axis_weights(in_w, out_w, kernel)
    wv = axis_weights(in_h, out_h, kernel)
    tmp = plane @ wh.T        # horizontal pass: (in_h, out_w)
    return wv @ tmp           # vertical pass: (out_h, out_w)


def _resample_frame(f: Frame, factor_num: int, factor_den: int, kernel: KernelSpec) -> Frame:
    def do(p):
        h, w = p.shape
        out = resample_plane(p, w * factor_num // factor_den, h * factor_num // factor_den, kernel)
        return round_half_away(np.clip(out, 0.0, 255.0)).astype(np.uint8)

    return Frame(y=do(f.y), cb=do(f.cb), cr=do(f.cr), subsampling=f.subsampling)


def downscale_video(seq: VideoSequence, factor: int, kernel: KernelSpec) -> VideoSequence:
    """Downscale every plane of every frame by an integer factor."""
    if factor < 1:
        raise ValueError(f"factor must be positive, got {factor}")
    if seq.frames:
        f0 = seq.frames[0]
        if f0.width % factor or f0.height % factor:
            raise ValueError(
                f"frame {f0.width}x{f0.height} not divisible by factor {factor}")
        if f0.subsampling == C420 and ((f0.width // factor) % 2 or (f0.height // factor) % 2):
            raise ValueError(
                f"downscaled C420 geometry {f0.width // factor}x{f0.height // factor} is odd")
    frames = [_resample_frame(f, 1, factor, kernel) for f in seq.frames]
    return VideoSequence(frames=frames, frame_rate=seq.frame_rate, metadata=dict(seq.metadata))


def upscale_video(seq: VideoSequence, factor: int, kernel: KernelSpec) -> VideoSequence:
    """Upscale every plane by an integer factor (benchmark baselines)."""
    if factor < 1:
        raise ValueError(f"factor must be positive, got {factor}")
    frames = [_resample_frame(f, factor, 1, kernel) for f in seq.frames]
    return VideoSequence(frames=frames, frame_rate=seq.frame_rate, metadata=dict(seq.metadata))
