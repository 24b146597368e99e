"""Multi-mask blind-spot networks for self-supervised image denoising.

The package is organized around the pipeline it implements:

* :mod:`mmbsn.ops`       -- float64 tensor ops with exact gradients and Adam
* :mod:`mmbsn.masks`     -- blind-spot mask shapes and exclusion analysis
* :mod:`mmbsn.pd`        -- pixel-shuffle downsampling and refinement
* :mod:`mmbsn.models`    -- architecture builders, graphs, checkpoints
* :mod:`mmbsn.noise`     -- synthetic data, correlated noise, region census
* :mod:`mmbsn.metrics`   -- PSNR / SSIM
* :mod:`mmbsn.train`     -- self-supervised training and inference
* :mod:`mmbsn.estimator` -- scikit-learn style fit/transform front end
* :mod:`mmbsn.cli`       -- the ``mmbsn`` command
"""

from .estimator import MultiMaskDenoiser
from .masks import (
    MASK_TAGS,
    KernelMask,
    combined_exclusion,
    empirical_exclusion,
    exclusion_set,
    render_mask,
    shape_offsets,
)
from .metrics import psnr, ssim
from .models import (
    ArchitectureConfig,
    ModelGraph,
    build,
    build_apbsn,
    build_mmbsn,
    build_probe_stack,
    build_smmbsn,
    load_checkpoint,
    save_checkpoint,
)
from .noise import NoiseRegionStats, NoiseSpec, analyze_regions, gen_clean, gen_correlated_noise
from .ops import AdamState, ConvParams, adam_step, conv2d, conv2d_backward, l1_loss_and_grad
from .pd import pd, pd_inv, random_replace_refine
from .train import Checkpoint, TrainingConfig, denoise, denoise_raw, train, train_step

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ArchitectureConfig",
    "Checkpoint",
    "ConvParams",
    "KernelMask",
    "MASK_TAGS",
    "ModelGraph",
    "MultiMaskDenoiser",
    "NoiseRegionStats",
    "NoiseSpec",
    "TrainingConfig",
    "adam_step",
    "analyze_regions",
    "build",
    "build_apbsn",
    "build_mmbsn",
    "build_probe_stack",
    "build_smmbsn",
    "combined_exclusion",
    "conv2d",
    "conv2d_backward",
    "denoise",
    "denoise_raw",
    "empirical_exclusion",
    "exclusion_set",
    "gen_clean",
    "gen_correlated_noise",
    "l1_loss_and_grad",
    "load_checkpoint",
    "pd",
    "pd_inv",
    "psnr",
    "random_replace_refine",
    "render_mask",
    "save_checkpoint",
    "shape_offsets",
    "ssim",
    "train",
    "train_step",
]
