"""Command-line entry point: upscale, downscale, metrics, prepare-data,
bench, inspect-weights, selftest.

Exit codes: 0 success, 1 usage error (nothing written), 2 processing
error. Output files are written to a temp path and renamed on success, so
failures never leave partial outputs behind.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import re
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import dataprep, frame_io, metrics, network, pipeline, resample, weights_io
from .frame_io import C420

__all__ = ["main", "run"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vsrhe", description="Compressed-video 4x super-resolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--dump-config", action="store_true",
                       help="print the parsed configuration as JSON and exit")

    p = sub.add_parser("upscale", help="super-resolve a C420 video 4x with the network")
    p.add_argument("--in", dest="input", required=True, help="input video (.y4m or raw .yuv)")
    p.add_argument("--weights", required=True, help="network weight file")
    p.add_argument("--out", required=True, help="output video path")
    p.add_argument("--overlap", type=int, default=8, help="tile overlap in LR pixels")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: VSRHE_THREADS or 1)")
    p.add_argument("--width", type=int, help="frame width (raw YUV input only)")
    p.add_argument("--height", type=int, help="frame height (raw YUV input only)")
    add_common(p)

    p = sub.add_parser("downscale", help="downscale a video by an integer factor")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--kernel", choices=["bicubic", "lanczos", "nearest"], default="bicubic")
    p.add_argument("--kernel-param", type=float, default=None,
                   help="bicubic a (default -0.5) or Lanczos lobes (default 3)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    add_common(p)

    p = sub.add_parser("metrics", help="full-reference quality metrics")
    p.add_argument("--ref", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--metrics", default="psnr,ssim,msssim",
                   help="comma list from psnr,ssim,msssim")
    p.add_argument("--vmaf-csv", help="ingest per-frame VMAF scores (frame,vmaf CSV)")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--threads", type=int, default=None)
    add_common(p)

    p = sub.add_parser("bench", help="Table-style method comparison on one reference")
    p.add_argument("--ref", required=True, help="ground-truth HR video")
    p.add_argument("--methods", default="bicubic,network")
    p.add_argument("--weights", help="weight file (needed for the network method)")
    p.add_argument("--out", required=True, help="output text table")
    p.add_argument("--overlap", type=int, default=8)
    add_common(p)

    p = sub.add_parser("prepare-data", help="extract training patch pairs")
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--qp-list", default=",".join(str(q) for q in dataprep.DEFAULT_QP_LIST))
    p.add_argument("--count", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="manifest path (.jsonl)")
    add_common(p)

    p = sub.add_parser("inspect-weights", help="print weight file config and complexity")
    p.add_argument("path")
    add_common(p)

    p = sub.add_parser("selftest", help="run the embedded verification suite")
    add_common(p)

    return parser


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("VSRHE_THREADS")
    return max(1, int(env)) if env else 1


def _read_video(path: str, width=None, height=None) -> frame_io.VideoSequence:
    if path.endswith(".y4m"):
        with open(path, "rb") as f:
            return frame_io.parse_y4m(f)
    if width is None or height is None:
        raise _UsageError(f"raw YUV input {path!r} requires --width and --height")
    with open(path, "rb") as f:
        return frame_io.read_raw_yuv(f, width, height, C420)


def _write_video_atomic(seq, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            if path.endswith(".y4m"):
                frame_io.write_y4m(seq, f)
            else:
                frame_io.write_raw_yuv(seq, f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text_atomic(text: str, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _kernel_from_args(args) -> resample.KernelSpec:
    if args.kernel == "bicubic":
        return resample.KernelSpec.bicubic(-0.5 if args.kernel_param is None
                                           else args.kernel_param)
    if args.kernel == "lanczos":
        return resample.KernelSpec.lanczos(3 if args.kernel_param is None
                                           else int(args.kernel_param))
    return resample.KernelSpec.nearest()


def _cmd_upscale(args) -> int:
    seq = _read_video(args.input, args.width, args.height)
    with open(args.weights, "rb") as f:
        weights, cfg = weights_io.load_weights(f)
    model = pipeline.NetworkModel(weights, cfg)
    out = pipeline.upscale_sequence(seq, model, overlap=args.overlap,
                                    threads=_threads(args), progress=sys.stderr)
    _write_video_atomic(out, args.out)
    return 0


def _cmd_downscale(args) -> int:
    seq = _read_video(args.input, args.width, args.height)
    out = resample.downscale_video(seq, args.factor, _kernel_from_args(args))
    _write_video_atomic(out, args.out)
    return 0


def _metric_report(ref_seq, dist_seq, which, vmaf_path, sequence_id, method):
    if len(ref_seq) != len(dist_seq):
        raise ValueError(
            f"frame counts differ: {len(ref_seq)} vs {len(dist_seq)}")
    psnr_col, ssim_col, ms_col = [], [], []
    for r, d in zip(ref_seq.frames, dist_seq.frames):
        psnr_col.append(metrics.psnr_y(r, d) if "psnr" in which else float("nan"))
        ssim_col.append(metrics.ssim(r, d) if "ssim" in which else float("nan"))
        ms_col.append(metrics.ms_ssim(r, d) if "msssim" in which else float("nan"))
    vmaf_col = None
    if vmaf_path:
        with open(vmaf_path) as f:
            scores = metrics.read_vmaf_csv(f)
        vmaf_col = [scores.get(i, float("nan")) for i in range(len(ref_seq))]
    return metrics.MetricReport(sequence_id=sequence_id, method=method,
                                psnr_y=psnr_col, ssim=ssim_col, msssim=ms_col,
                                vmaf=vmaf_col)


def _cmd_metrics(args) -> int:
    which = {m.strip() for m in args.metrics.split(",") if m.strip()}
    unknown = which - {"psnr", "ssim", "msssim"}
    if unknown:
        raise _UsageError(f"unknown metrics: {', '.join(sorted(unknown))}")
    ref_seq = _read_video(args.ref)
    dist_seq = _read_video(args.dist)
    report = _metric_report(ref_seq, dist_seq, which, args.vmaf_csv,
                            sequence_id=args.dist, method="dist")
    buf = io.StringIO()
    report.write_csv(buf)
    _write_text_atomic(buf.getvalue(), args.out)
    return 0


def _cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    ref = _read_video(args.ref)
    f0 = ref.frames[0]
    if f0.width % 4 or f0.height % 4:
        raise ValueError(f"reference {f0.width}x{f0.height} not divisible by 4")
    lr = resample.downscale_video(ref, 4, resample.KernelSpec.bicubic())
    reports = []
    which = {"psnr", "ssim", "msssim"}
    for method in methods:
        if method == "bicubic":
            cand = resample.upscale_video(lr, 4, resample.KernelSpec.bicubic())
        elif method == "lanczos":
            cand = resample.upscale_video(lr, 4, resample.KernelSpec.lanczos())
        elif method == "network":
            if not args.weights:
                raise _UsageError("the network method requires --weights")
            with open(args.weights, "rb") as f:
                weights, cfg = weights_io.load_weights(f)
            model = pipeline.NetworkModel(weights, cfg)
            cand = pipeline.upscale_sequence(lr, model, overlap=args.overlap)
        else:
            raise _UsageError(f"unknown bench method {method!r}")
        reports.append(_metric_report(ref, cand, which, None,
                                      sequence_id=args.ref, method=method))
    _write_text_atomic(metrics.format_summary_table(reports), args.out)
    return 0


def _cmd_prepare_data(args) -> int:
    qp_list = [int(q) for q in args.qp_list.split(",") if q.strip()]
    lr_dir, hr_dir = Path(args.lr_dir), Path(args.hr_dir)
    lr_files = sorted(p for p in lr_dir.iterdir()
                      if p.suffix in (".y4m", ".yuv"))
    if not lr_files:
        raise ValueError(f"no .y4m/.yuv sources in {lr_dir}")
    sources = []
    for lr_path in lr_files:
        hr_path = hr_dir / lr_path.name
        if not hr_path.exists():
            raise ValueError(f"no HR counterpart for {lr_path.name} in {hr_dir}")
        m = re.search(r"qp(\d+)", lr_path.stem, re.IGNORECASE)
        qp = int(m.group(1)) if m else (qp_list[0] if qp_list else 0)
        sources.append((lr_path, hr_path, qp))
    per_source = max(1, args.count // len(sources))
    pairs = []
    for i, (lr_path, hr_path, qp) in enumerate(sources):
        lr_seq = _read_video(str(lr_path))
        hr_seq = _read_video(str(hr_path))
        n = per_source if i < len(sources) - 1 else args.count - per_source * (len(sources) - 1)
        pairs.extend(dataprep.extract_patch_pairs(
            lr_seq, hr_seq, n, seed=args.seed + i, qp_label=qp,
            source_id=lr_path.stem))
    dataprep.write_manifest(pairs, args.out)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def _cmd_inspect_weights(args) -> int:
    with open(args.path, "rb") as f:
        weights, cfg = weights_io.load_weights(f)
    print("config:")
    for k, v in cfg.to_dict().items():
        print(f"  {k}: {v}")
    print("tensors:")
    for name, t in weights.items():
        print(f"  {name}  f32 {list(t.shape)}")
    params = network.count_params(cfg)
    flops = network.count_flops(cfg)
    pdev = 100.0 * (params - network.REFERENCE_PARAMS) / network.REFERENCE_PARAMS
    fdev = 100.0 * (flops - network.REFERENCE_FLOPS) / network.REFERENCE_FLOPS
    print(f"params: {params} ({params / 1e6:.2f}M)  paper: 5.43M  deviation: {pdev:+.1f}%")
    print(f"flops (64x64 input, 2*MAC convention): {flops} ({flops / 1e9:.2f}G)  "
          f"paper: 455.16G  deviation: {fdev:+.1f}%")
    return 0


def _cmd_selftest(args) -> int:
    failures = 0

    def check(name, fn):
        nonlocal failures
        try:
            fn()
            print(f"PASS {name}")
        except Exception as e:
            failures += 1
            print(f"FAIL {name}: {e}")

    from . import tensor_ops

    def conv_check():
        x = np.ones((1, 3, 3), dtype=np.float32)
        k = np.ones((1, 1, 3, 3), dtype=np.float32)
        out = tensor_ops.conv2d(x, k, np.zeros(1, np.float32), padding=1)
        assert out[0, 1, 1] == 9.0

    def softmax_check():
        s = tensor_ops.softmax(np.array([1000.0, 0.0], np.float32))
        assert abs(float(s.sum()) - 1.0) < 1e-6 and s[0] > 0.999

    def y4m_check():
        rng = np.random.Generator(np.random.PCG64(7))
        f = frame_io.Frame(y=rng.integers(0, 256, (4, 6), dtype=np.uint8),
                           cb=rng.integers(0, 256, (2, 3), dtype=np.uint8),
                           cr=rng.integers(0, 256, (2, 3), dtype=np.uint8))
        seq = frame_io.VideoSequence(frames=[f])
        buf = io.BytesIO()
        frame_io.write_y4m(seq, buf)
        buf.seek(0)
        back = frame_io.parse_y4m(buf)
        assert np.array_equal(back.frames[0].y, f.y)
        buf2 = io.BytesIO()
        frame_io.write_y4m(back, buf2)
        assert buf.getvalue() == buf2.getvalue()

    def chroma_check():
        rng = np.random.Generator(np.random.PCG64(8))
        f = frame_io.Frame(y=rng.integers(0, 256, (8, 8), dtype=np.uint8),
                           cb=rng.integers(0, 256, (4, 4), dtype=np.uint8),
                           cr=rng.integers(0, 256, (4, 4), dtype=np.uint8))
        rt = frame_io.chroma_downsample_mean(frame_io.chroma_upsample_nn(f))
        assert np.array_equal(rt.cb, f.cb) and np.array_equal(rt.cr, f.cr)

    def weights_check():
        cfg = network.NetworkConfig(channel_dim=8, blocks=1, window_sizes=(4,),
                                    heads=2, input_size=8)
        w = network.init_random(cfg, 1)
        buf = io.BytesIO()
        weights_io.save_weights(w, cfg, buf)
        buf.seek(0)
        back, _ = weights_io.load_weights(buf)
        assert all(np.array_equal(back[k], w[k]) for k in w)

    def ssim_check():
        rng = np.random.Generator(np.random.PCG64(9))
        a = rng.random((32, 32)) * 255
        assert abs(metrics.ssim(a, a) - 1.0) < 1e-12

    def schedule_check():
        assert dataprep.lr_schedule(0) == 1e-4
        assert dataprep.lr_schedule(150000) == 2.5e-5
        assert dataprep.lr_schedule(300000) == 6.25e-6

    def tiling_check():
        plan = pipeline.plan_tiles(320, 180)
        cover = np.zeros((180 + plan.pad_bottom, 320 + plan.pad_right), bool)
        for ox, oy in plan.origins:
            cover[oy:oy + 64, ox:ox + 64] = True
        assert cover.all()
        w = pipeline.blend_weight_map(plan)
        assert (w > 0).all()

    def resample_check():
        plane = np.full((16, 16), 7.0, np.float32)
        out = resample.resample_plane(plane, 4, 4, resample.KernelSpec.bicubic())
        assert np.allclose(out, 7.0, atol=1e-5)

    check("conv2d center sum", conv_check)
    check("softmax stability", softmax_check)
    check("y4m round trip", y4m_check)
    check("chroma round trip", chroma_check)
    check("weight file round trip", weights_check)
    check("ssim identity", ssim_check)
    check("lr schedule", schedule_check)
    check("tile coverage", tiling_check)
    check("resampler constant preservation", resample_check)

    if failures:
        print(f"{failures} check(s) failed")
        return 2
    print("all checks passed")
    return 0


_COMMANDS = {
    "upscale": _cmd_upscale,
    "downscale": _cmd_downscale,
    "metrics": _cmd_metrics,
    "bench": _cmd_bench,
    "prepare-data": _cmd_prepare_data,
    "inspect-weights": _cmd_inspect_weights,
    "selftest": _cmd_selftest,
}


def run(argv) -> int:
    """Parse argv (without the program name) and execute; returns exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if getattr(args, "dump_config", False):
        cfg = {k: v for k, v in vars(args).items() if k != "dump_config"}
        print(json.dumps(cfg, default=str, indent=2))
        return 0
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
