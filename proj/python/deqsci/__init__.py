"""Deep-equilibrium video snapshot compressive imaging.

Cubes are float64 arrays of shape (frames, height, width); measurements and
mask-free images are (height, width).
"""

from ._core import (
    DeqsciError,
    DivergedError,
    adjoint,
    admm_x_update,
    fixed_point,
    forward,
    gap_contraction_bound,
    gap_project,
    mask_generate,
    pnp_gap,
    projection_spectrum,
    psnr,
    read_tensor,
    reconstruct,
    ssim,
    synth_video,
    write_tensor,
)

__all__ = [
    "DeqsciError",
    "DivergedError",
    "adjoint",
    "admm_x_update",
    "fixed_point",
    "forward",
    "gap_contraction_bound",
    "gap_project",
    "mask_generate",
    "pnp_gap",
    "projection_spectrum",
    "psnr",
    "read_tensor",
    "reconstruct",
    "ssim",
    "synth_video",
    "write_tensor",
]
