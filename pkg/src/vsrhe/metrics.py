"""Full-reference quality metrics: PSNR on luma, SSIM, MS-SSIM, and the
report container used by the benchmark CLI.

All statistics are computed in float64. SSIM uses an 11x11 Gaussian window
(sigma 1.5) over valid (non-padded) positions; MS-SSIM takes the mean
contrast-structure term at the four finer scales, full SSIM at the
coarsest, exponentiated by the standard weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import correlate1d

from .frame_io import Frame

__all__ = [
    "SsimParams",
    "MetricReport",
    "psnr_y",
    "ssim",
    "ms_ssim",
    "MS_SSIM_WEIGHTS",
]

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """1-D Gaussian tap vector normalized to sum exactly to 1."""
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("K1 and K2 must be positive")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError(f"window size must be odd and positive, got {self.window_size}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def taps(self) -> np.ndarray:
        return gaussian_window(self.window_size, self.sigma)


def _luma(x) -> np.ndarray:
    if isinstance(x, Frame):
        return x.y.astype(np.float64)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D plane or Frame, got shape {arr.shape}")
    return arr


def _check_geometry(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"geometry mismatch: {a.shape} vs {b.shape}")


def filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable Gaussian correlation keeping only fully-interior windows."""
    half = len(taps) // 2
    out = correlate1d(img, taps, axis=0, mode="constant")
    out = correlate1d(out, taps, axis=1, mode="constant")
    return out[half:img.shape[0] - half, half:img.shape[1] - half]


def _local_stats(x: np.ndarray, y: np.ndarray, p: SsimParams):
    taps = p.taps
    mu_x = filter_valid(x, taps)
    mu_y = filter_valid(y, taps)
    gx2 = filter_valid(x * x, taps)
    gy2 = filter_valid(y * y, taps)
    gxy = filter_valid(x * y, taps)
    var_x = gx2 - mu_x * mu_x
    var_y = gy2 - mu_y * mu_y
    cov = gxy - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov


def ssim_and_cs_maps(x: np.ndarray, y: np.ndarray, p: SsimParams):
    """Per-position SSIM and contrast-structure maps over valid windows."""
    mu_x, mu_y, var_x, var_y, cov = _local_stats(x, y, p)
    c1, c2 = p.c1, p.c2
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    cs = (2.0 * cov + c2) / (var_x + var_y + c2)
    return lum * cs, cs


def psnr_y(ref, dist, dynamic_range: float = 255.0) -> float:
    """PSNR in dB on the luma plane (code values); +inf when identical."""
    a = _luma(ref)
    b = _luma(dist)
    _check_geometry(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(dynamic_range ** 2 / mse)


def ssim(ref, dist, p: SsimParams | None = None) -> float:
    """Mean SSIM over valid window positions of the luma plane (or 2-D grids)."""
    if p is None:
        p = SsimParams()
    a = _luma(ref)
    b = _luma(dist)
    _check_geometry(a, b)
    if min(a.shape) < p.window_size:
        raise ValueError(
            f"input {a.shape} smaller than the {p.window_size}x{p.window_size} window")
    s, _ = ssim_and_cs_maps(a, b, p)
    return float(np.mean(s))


def mean_pool2(img: np.ndarray) -> np.ndarray:
    """2x2 mean pooling; odd trailing row/column is dropped."""
    h, w = img.shape
    img = img[:h - h % 2, :w - w % 2]
    return img.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def ms_ssim(ref, dist, p: SsimParams | None = None, scales: int = 5,
            weights: Sequence[float] = MS_SSIM_WEIGHTS) -> float:
    """Multi-scale SSIM: mean contrast-structure at the finer scales, full
    SSIM at the coarsest, combined as a weighted geometric product."""
    if p is None:
        p = SsimParams()
    if len(weights) != scales:
        raise ValueError(f"need {scales} scale weights, got {len(weights)}")
    a = _luma(ref)
    b = _luma(dist)
    _check_geometry(a, b)
    min_dim = p.window_size * 2 ** (scales - 1)
    if min(a.shape) < min_dim:
        raise ValueError(
            f"input {a.shape} too small for {scales}-scale MS-SSIM; "
            f"minimum dimension is {min_dim}")
    result = 1.0
    for j in range(scales):
        s_map, cs_map = ssim_and_cs_maps(a, b, p)
        if j == scales - 1:
            val = float(np.mean(s_map))
        else:
            val = float(np.mean(cs_map))
        if val <= 0.0:
            raise ValueError(
                f"non-positive similarity mean {val} at scale {j}; "
                "MS-SSIM undefined for this pair")
        result *= val ** weights[j]
        if j < scales - 1:
            a = mean_pool2(a)
            b = mean_pool2(b)
    return result


@dataclass
class MetricReport:
    """Per-frame and aggregate metrics for one reference/distorted pair."""

    sequence_id: str
    method: str
    psnr_y: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    msssim: list = field(default_factory=list)
    vmaf: list | None = None

    def __post_init__(self):
        n = len(self.psnr_y)
        if len(self.ssim) != n or len(self.msssim) != n:
            raise ValueError("per-frame metric columns have differing lengths")
        if self.vmaf is not None and len(self.vmaf) != n:
            raise ValueError(
                f"VMAF column has {len(self.vmaf)} entries for {n} frames")

    @property
    def frame_count(self) -> int:
        return len(self.psnr_y)

    def mean(self, column: str) -> float:
        vals = getattr(self, column)
        if vals is None or not vals:
            return math.nan
        return sum(vals) / len(vals)

    def write_csv(self, sink) -> None:
        cols = ["frame", "psnr_y", "ssim", "msssim"]
        if self.vmaf is not None:
            cols.append("vmaf")
        writer = csv.writer(sink)
        writer.writerow(cols)
        for i in range(self.frame_count):
            row = [i, _fmt(self.psnr_y[i]), _fmt(self.ssim[i]), _fmt(self.msssim[i])]
            if self.vmaf is not None:
                row.append(_fmt(self.vmaf[i]))
            writer.writerow(row)
        mean_row = ["mean", _fmt(self.mean("psnr_y")), _fmt(self.mean("ssim")),
                    _fmt(self.mean("msssim"))]
        if self.vmaf is not None:
            mean_row.append(_fmt(self.mean("vmaf")))
        writer.writerow(mean_row)

    def summary_row(self) -> dict:
        row = {
            "Method": self.method,
            "PSNR-Y (dB)": self.mean("psnr_y"),
            "SSIM": self.mean("ssim"),
            "MS-SSIM": self.mean("msssim"),
        }
        row["VMAF"] = self.mean("vmaf") if self.vmaf is not None else None
        return row


def _fmt(v: float) -> str:
    if v != v:  # nan
        return "nan"
    if math.isinf(v):
        return "inf"
    return f"{v:.6f}"


def format_summary_table(reports: Sequence[MetricReport]) -> str:
    """Plain-text comparison table: one row per method, published column order."""
    headers = ["Method", "PSNR-Y (dB)", "SSIM", "MS-SSIM", "VMAF"]
    rows = []
    for r in reports:
        s = r.summary_row()
        rows.append([
            s["Method"],
            "inf" if math.isinf(s["PSNR-Y (dB)"]) else f"{s['PSNR-Y (dB)']:.2f}",
            f"{s['SSIM']:.4f}",
            f"{s['MS-SSIM']:.4f}",
            "-" if s["VMAF"] is None else f"{s['VMAF']:.2f}",
        ])
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    for r in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def read_vmaf_csv(source) -> dict:
    """Parse `frame,vmaf` CSV into {frame_index: score}."""
    reader = csv.reader(source)
    scores = {}
    for row in reader:
        if not row or row[0].strip().lower() in ("frame", ""):
            continue
        scores[int(row[0])] = float(row[1])
    return scores
