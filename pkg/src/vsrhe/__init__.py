"""Compressed-video 4x super-resolution toolkit.

Submodules:
    tensor_ops  float32 kernels (conv, matmul, softmax, windows, ...)
    frame_io    Y4M / raw YUV parsing, chroma format conversion
    resample    bicubic / Lanczos / nearest separable resamplers
    network     the windowed-attention SR network and complexity accounting
    weights_io  portable weight file serialization
    metrics     PSNR-Y, SSIM, MS-SSIM, benchmark reports
    losses      perceptual loss stack with analytic gradients
    pipeline    tiled full-frame / full-sequence inference
    dataprep    patch-pair extraction, augmentation, manifests, LR schedule
    cli         the `vsrhe` command-line tool
"""

__version__ = "0.1.0"
