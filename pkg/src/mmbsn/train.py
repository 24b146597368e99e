"""Self-supervised training and inference for blind-spot denoisers.

Training never sees a clean image: each step pixel-shuffle-downsamples a
batch of noisy crops, runs the model on the mosaic, inverts the shuffle,
and takes the L1 loss against the same noisy crops.  The blind-spot
structure is what turns that reconstruction objective into denoising.

Everything is deterministic for a given seed: model init, crop/augment
sampling and optimizer state derive from one SeedSequence, so two runs
with equal seeds produce byte-identical checkpoints.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .models import ArchitectureConfig, build, save_checkpoint
from .ops import adam_step, check_tensor4, l1_loss_and_grad
from .pd import pd, pd_inv, random_replace_refine


@dataclass
class TrainingConfig:
    """Hyperparameters of the self-supervised protocol.

    Defaults are the full-scale settings: batch 8, 30 epochs, Adam at
    1e-4 decayed x0.1 every 8 epochs, 128x128 crops, rotation/flip
    augmentation, pixel-shuffle stride 5 for training and 2 for testing.
    ``toy`` returns a desk-scale variant for fast experiments.
    """

    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    arch: str = "mmbsn"
    batch: int = 8
    epochs: int = 30
    steps_per_epoch: int | None = None
    lr: float = 1e-4
    lr_decay: float = 0.1
    lr_decay_every: int = 8
    crop: int = 128
    pd_train: int = 5
    pd_test: int = 2
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("batch", "epochs", "lr_decay_every", "crop", "pd_train", "pd_test"):
            low = 0 if name == "epochs" else 1
            if getattr(self, name) < low:
                raise ValueError(f"{name} must be >= {low}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1")

    @classmethod
    def toy(cls, **overrides):
        cfg = cls(
            architecture=ArchitectureConfig(base_channels=16),
            epochs=2,
            crop=64,
            pd_train=2,
        )
        return replace(cfg, **overrides) if overrides else cfg

    def lr_at_epoch(self, epoch):
        return self.lr * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass
class Checkpoint:
    """A trained (or freshly initialized) model plus optimizer state."""

    model: object
    adam: object
    config: TrainingConfig
    step: int = 0

    def save(self, path):
        save_checkpoint(path, self.model, adam=self.adam, seed=self.config.seed, step=self.step)


def train_step(model, adam, batch, s):
    """One self-supervised update; returns the scalar L1 loss.

    Computes pd_inv(model(pd(batch, s)), s), takes the L1 loss against the
    batch itself, backpropagates (pd and its inverse are permutations, so
    their gradient is the opposite shuffle), and applies one Adam step with
    blind-tap re-projection.
    """
    batch = check_tensor4(batch, "batch")
    mosaic = pd(batch, s)
    out = model.forward(mosaic)
    recon = pd_inv(out, s, crop_hw=batch.shape[2:])
    loss, grad = l1_loss_and_grad(recon, batch)
    if not np.isfinite(loss):
        raise RuntimeError(f"non-finite training loss {loss!r}; aborting")
    _, grads = model.backward(pd(grad, s))
    adam_step(model.param_arrays(), grads, adam, masks=model.param_masks())
    return loss


def _augment(crop, rot90, flip_h, flip_v):
    if rot90:
        crop = np.rot90(crop, axes=(2, 3))
    if flip_h:
        crop = crop[:, :, :, ::-1]
    if flip_v:
        crop = crop[:, :, ::-1, :]
    return np.ascontiguousarray(crop)


def _sample_batch(images, cfg, rng):
    crops = []
    for _ in range(cfg.batch):
        img = images[rng.integers(len(images))]
        _, _, h, w = img.shape
        if h < cfg.crop or w < cfg.crop:
            raise ValueError(f"image {(h, w)} smaller than crop {cfg.crop}")
        y0 = int(rng.integers(h - cfg.crop + 1))
        x0 = int(rng.integers(w - cfg.crop + 1))
        crop = img[:, :, y0 : y0 + cfg.crop, x0 : x0 + cfg.crop]
        if cfg.augment:
            crop = _augment(crop, *(bool(b) for b in rng.integers(0, 2, size=3)))
        crops.append(crop)
    return np.concatenate(crops, axis=0)


def train(config, images, ckpt_dir=None, log_fn=None):
    """Run the full schedule on a dataset of noisy images.

    images: one (n, c, h, w) array or a list of (1, c, h, w) arrays --
    noisy data only, there is no slot for clean targets.  Returns
    (Checkpoint, losses) where losses has one entry per step.
    """
    if isinstance(images, np.ndarray):
        images = [check_tensor4(images)[i : i + 1] for i in range(images.shape[0])]
    else:
        images = [check_tensor4(im) for im in images]
    if not images:
        raise ValueError("training requires at least one noisy image")
    cfg = config
    seq = np.random.SeedSequence(cfg.seed)
    rng_init, rng_data = (np.random.default_rng(s) for s in seq.spawn(2))

    model = build(cfg.arch, cfg.architecture)
    model.init_params(rng_init)
    adam = model.make_adam(lr=cfg.lr)

    steps = cfg.steps_per_epoch or max(1, len(images) // cfg.batch)
    losses = []
    step = 0
    for epoch in range(cfg.epochs):
        adam.lr = cfg.lr_at_epoch(epoch)
        for _ in range(steps):
            batch = _sample_batch(images, cfg, rng_data)
            loss = train_step(model, adam, batch, cfg.pd_train)
            losses.append(loss)
            step += 1
            if log_fn is not None:
                log_fn(epoch, step, loss)
        if ckpt_dir is not None:
            os.makedirs(ckpt_dir, exist_ok=True)
            Checkpoint(model, adam, cfg, step).save(
                os.path.join(ckpt_dir, f"epoch_{epoch:03d}.mmbsn")
            )
    return Checkpoint(model, adam, cfg, step), losses


def denoise_raw(model, noisy, s):
    """pd_inv(model(pd(noisy))) with no refinement or clamping."""
    noisy = check_tensor4(noisy, "noisy")
    mosaic = pd(noisy, s)
    return pd_inv(model.forward(mosaic), s, crop_hw=noisy.shape[2:])


def denoise(model, noisy, s_test=2, refine=False, refine_p=0.16, refine_T=8, seed=0):
    """Full inference pipeline; output clamped to [0, 1]."""
    noisy = check_tensor4(noisy, "noisy")
    out = denoise_raw(model, noisy, s_test)
    if refine:
        out = random_replace_refine(
            lambda img: denoise_raw(model, img, s_test),
            out,
            noisy,
            p=refine_p,
            T=refine_T,
            rng=np.random.default_rng(seed),
        )
    return np.clip(out, 0.0, 1.0)
