"""Video inpainting with a diffusion transformer: rectified-flow training,
few-step Euler sampling, and temporal sliding-window fusion for long videos.
"""

from ._core import (
    ClipPlan,
    MaskKind,
    MaskSpec,
    ModelConfig,
    OutputMode,
    apply_mask,
    decode,
    downsample_mask,
    encode,
    fuse_step,
    gen_masks,
    gen_video,
    inpaint,
    model_forward,
    param_count,
    plan_clips,
    psnr,
    read_frames,
    read_masks,
    selftest,
    ssim,
    write_frames,
    write_masks,
)

__all__ = [
    "ClipPlan",
    "MaskKind",
    "MaskSpec",
    "ModelConfig",
    "OutputMode",
    "apply_mask",
    "decode",
    "downsample_mask",
    "encode",
    "fuse_step",
    "gen_masks",
    "gen_video",
    "inpaint",
    "model_forward",
    "param_count",
    "plan_clips",
    "psnr",
    "read_frames",
    "read_masks",
    "selftest",
    "ssim",
    "write_frames",
    "write_masks",
]

__version__ = "0.1.0"
