"""Application pipelines: denoising, wavelet zooming, surface interpolation."""

from .denoise import DenoiseResult, JointModelSpec, denoise_joint, denoise_single
from .metrics import psnr, ssim
from .surface import SurfaceResult, harmonic_fill, interpolate_surface, normalised_gradient, prox_v_step, solve_v_step
from .zoom import ZoomResult, naive_upsample, zoom_wavelet

__all__ = [
    "JointModelSpec",
    "DenoiseResult",
    "denoise_joint",
    "denoise_single",
    "ZoomResult",
    "naive_upsample",
    "zoom_wavelet",
    "SurfaceResult",
    "interpolate_surface",
    "harmonic_fill",
    "normalised_gradient",
    "prox_v_step",
    "solve_v_step",
    "psnr",
    "ssim",
]
