"""Scikit-learn style front end: fit on noisy images, transform to denoise.

The estimator is a transformer: ``fit(X)`` trains the blind-spot network
self-supervised on the noisy images themselves (``y`` is accepted for
pipeline compatibility and ignored), and ``transform(X)`` denoises.
``score(X, y)`` reports mean PSNR against reference images, which makes
the estimator usable with model-selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .metrics import psnr
from .models import ArchitectureConfig
from .train import TrainingConfig, denoise, train
from .validation import image_batch_to_tensor4, tensor4_to_image_batch


class MultiMaskDenoiser(TransformerMixin, BaseEstimator):
    """Self-supervised blind-spot denoiser for spatially correlated noise.

    Parameters mirror the architecture and training knobs; defaults are
    desk-scale (16 channels, 2 epochs) rather than the full-size recipe,
    so ``fit`` on a handful of images finishes in minutes on a CPU.

    Examples
    --------
    >>> den = MultiMaskDenoiser(masks=("slash", "backslash"), epochs=1)
    >>> den.fit(noisy)               # noisy: (n, h, w, 3) floats in [0, 1]
    >>> clean_est = den.transform(noisy)
    """

    def __init__(
        self,
        arch="mmbsn",
        masks=("slash", "backslash"),
        base_channels=16,
        kernel_sizes=(3, 5),
        dilations=(2, 3),
        cdcl_depth=2,
        trunk_depth=7,
        batch_size=4,
        epochs=2,
        steps_per_epoch=None,
        lr=1e-4,
        lr_decay=0.1,
        lr_decay_every=8,
        crop=64,
        pd_train=2,
        pd_test=2,
        augment=True,
        refine=False,
        refine_p=0.16,
        refine_T=8,
        seed=0,
    ):
        self.arch = arch
        self.masks = masks
        self.base_channels = base_channels
        self.kernel_sizes = kernel_sizes
        self.dilations = dilations
        self.cdcl_depth = cdcl_depth
        self.trunk_depth = trunk_depth
        self.batch_size = batch_size
        self.epochs = epochs
        self.steps_per_epoch = steps_per_epoch
        self.lr = lr
        self.lr_decay = lr_decay
        self.lr_decay_every = lr_decay_every
        self.crop = crop
        self.pd_train = pd_train
        self.pd_test = pd_test
        self.augment = augment
        self.refine = refine
        self.refine_p = refine_p
        self.refine_T = refine_T
        self.seed = seed

    def _training_config(self, in_channels):
        arch_cfg = ArchitectureConfig(
            base_channels=self.base_channels,
            masks=tuple(self.masks),
            cdcl_depth=self.cdcl_depth,
            trunk_depth=self.trunk_depth,
            kernel_sizes=tuple(self.kernel_sizes),
            dilations=tuple(self.dilations),
            in_channels=in_channels,
        )
        return TrainingConfig(
            architecture=arch_cfg,
            arch=self.arch,
            batch=self.batch_size,
            epochs=self.epochs,
            steps_per_epoch=self.steps_per_epoch,
            lr=self.lr,
            lr_decay=self.lr_decay,
            lr_decay_every=self.lr_decay_every,
            crop=self.crop,
            pd_train=self.pd_train,
            pd_test=self.pd_test,
            augment=self.augment,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        """Train self-supervised on noisy images; y is ignored."""
        tensor, _ = image_batch_to_tensor4(X)
        config = self._training_config(in_channels=tensor.shape[1])
        checkpoint, losses = train(config, tensor)
        self.checkpoint_ = checkpoint
        self.model_ = checkpoint.model
        self.losses_ = losses
        self.n_channels_ = tensor.shape[1]
        return self

    def transform(self, X):
        """Denoise a batch of noisy images; layout matches the input."""
        if not hasattr(self, "model_"):
            raise NotFittedError("fit the denoiser before calling transform")
        tensor, ndim = image_batch_to_tensor4(X)
        if tensor.shape[1] != self.n_channels_:
            raise ValueError(
                f"fitted on {self.n_channels_}-channel images, got {tensor.shape[1]}"
            )
        out = np.concatenate(
            [
                denoise(
                    self.model_,
                    tensor[i : i + 1],
                    s_test=self.pd_test,
                    refine=self.refine,
                    refine_p=self.refine_p,
                    refine_T=self.refine_T,
                    seed=self.seed,
                )
                for i in range(tensor.shape[0])
            ],
            axis=0,
        )
        return tensor4_to_image_batch(out, ndim)

    def score(self, X, y):
        """Mean PSNR (dB) of transform(X) against reference images y."""
        denoised, _ = image_batch_to_tensor4(self.transform(X))
        reference, _ = image_batch_to_tensor4(y)
        if denoised.shape != reference.shape:
            raise ValueError(f"shape mismatch: {denoised.shape} vs {reference.shape}")
        return float(
            np.mean([psnr(denoised[i], reference[i]) for i in range(denoised.shape[0])])
        )
