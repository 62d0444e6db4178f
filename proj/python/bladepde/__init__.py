"""Image PDE solvers: reference schemes and trained adaptive-filter banks."""

from ._core import (
    BladeError,
    FilterBank,
    InstabilityError,
    InvalidArgument,
    IoError,
    bicubic_resample,
    chan_vese,
    deconvolve,
    evolve,
    lanczos_upscale,
    load_bank,
    psnr,
    reference,
    resample,
    save_bank,
    ssim,
    target_sequence,
    train,
    upscale,
    zero_bank,
)

__all__ = [
    "BladeError",
    "FilterBank",
    "InstabilityError",
    "InvalidArgument",
    "IoError",
    "bicubic_resample",
    "chan_vese",
    "deconvolve",
    "evolve",
    "lanczos_upscale",
    "load_bank",
    "psnr",
    "reference",
    "resample",
    "save_bank",
    "ssim",
    "target_sequence",
    "train",
    "upscale",
    "zero_bank",
]
