"""Python bindings for the dfir restoration and distillation core."""

import torch  # noqa: F401  loads the LibTorch shared libraries first

from ._core import (  # noqa: F401
    alpha_bar,
    apply_degradation,
    contrastive_loss,
    denoise_path,
    evaluate,
    forward_diffuse,
    kd_loss,
    load_config,
    psnr,
    restore,
    run_stage,
    sample_spec,
    ssim,
    subsequence,
)
