"""Adversarial training for the conditional editing generator.

The only supervision is the conditional discriminator on (input, edited)
pairs: there is deliberately no pixel/reconstruction term, so the generator
stays free to produce diverse edits for one input. Non-saturating losses
with a lazy R1 penalty, Adam with beta1 = 0.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .editops import ImagePair
from .generator import GeneratorBundle, GeneratorConfig

# Every term that can enter a gradient step, by construction. Kept as data so
# tests can assert the absence of any pixel-space reconstruction loss.
TRAINING_LOSS_TERMS = ("non_saturating_d", "non_saturating_g", "r1_penalty")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0025
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    batch_size: int = 16
    total_images: int = 200_000
    r1_gamma: float = 1.0
    r1_interval: int = 16
    seed: int = 0
    checkpoint_interval: int = 2_000

    def __post_init__(self) -> None:
        if self.learning_rate < 0 or self.batch_size <= 0 or self.total_images <= 0:
            raise ValueError("learning_rate, batch_size, total_images must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.r1_interval <= 0 or self.r1_gamma < 0:
            raise ValueError("r1_interval must be positive, r1_gamma nonnegative")


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, logs: dict):
        super().__init__(f"{message}; last logs: {logs}")
        self.logs = logs


def gan_losses(real_score, fake_score):
    """Non-saturating GAN losses: (loss_D, loss_G)."""
    real = torch.as_tensor(real_score, dtype=torch.float32)
    fake = torch.as_tensor(fake_score, dtype=torch.float32)
    loss_d = F.softplus(-real).mean() + F.softplus(fake).mean()
    loss_g = F.softplus(-fake).mean()
    return loss_d, loss_g


def r1_penalty(discriminator, image_in: torch.Tensor, image_out: torch.Tensor) -> torch.Tensor:
    """Squared gradient norm of the realness score w.r.t. both real inputs."""
    image_in = image_in.detach().requires_grad_(True)
    image_out = image_out.detach().requires_grad_(True)
    scores = discriminator(image_in, image_out)
    grads = torch.autograd.grad(scores.sum(), [image_in, image_out], create_graph=True)
    return sum(g.square().sum(dim=(1, 2, 3)) for g in grads).mean()


def pairs_to_tensors(pairs: list[ImagePair]) -> tuple[torch.Tensor, torch.Tensor]:
    before = np.stack([p.before for p in pairs]).transpose(0, 3, 1, 2)
    after = np.stack([p.after for p in pairs]).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(before)), torch.from_numpy(
        np.ascontiguousarray(after)
    )


def dataset_hash(pairs: list[ImagePair]) -> str:
    h = hashlib.sha256()
    for p in pairs:
        h.update(p.id.encode())
        h.update(p.recipe.caption.encode() if p.recipe else b"-")
    return h.hexdigest()[:16]


class Trainer:
    """Owns the bundle, the two optimizers, and the step counter."""

    def __init__(self, bundle: GeneratorBundle, cfg: TrainConfig):
        self.bundle = bundle
        self.cfg = cfg
        self.opt_g = torch.optim.Adam(
            list(bundle.generator_parameters()),
            lr=cfg.learning_rate,
            betas=(cfg.adam_beta1, cfg.adam_beta2),
        )
        self.opt_d = torch.optim.Adam(
            bundle.discriminator.parameters(),
            lr=cfg.learning_rate,
            betas=(cfg.adam_beta1, cfg.adam_beta2),
        )
        self.step_count = int(bundle.meta.get("steps", 0))

    def _random_noise(self, batch: int, gen: torch.Generator) -> list[torch.Tensor]:
        return [
            torch.randn(batch, 1, r, r, generator=gen)
            for r in self.bundle.config.noise_resolutions()
        ]

    def train_step(self, before: torch.Tensor, after: torch.Tensor,
                   z: torch.Tensor, torch_gen: torch.Generator) -> dict:
        """One D update then one G update on a (before, after) batch."""
        bundle, cfg = self.bundle, self.cfg
        batch = before.shape[0]

        # discriminator update
        with torch.no_grad():
            ws = bundle.mapping(z)
            fake = bundle.generate_t(before, ws, self._random_noise(batch, torch_gen))
        real_score = bundle.discriminator(before, after)
        fake_score = bundle.discriminator(before, fake)
        loss_d, _ = gan_losses(real_score, fake_score)
        logs = {"loss_d": float(loss_d.detach())}
        if cfg.r1_gamma > 0 and self.step_count % cfg.r1_interval == 0:
            r1 = r1_penalty(bundle.discriminator, before, after)
            # lazy regularization: scale by the interval it stands in for
            loss_d = loss_d + (cfg.r1_gamma / 2.0) * r1 * cfg.r1_interval
            logs["r1"] = float(r1.detach())
        self.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        self.opt_d.step()

        # generator update
        z2 = torch.randn(batch, bundle.config.z_dim, generator=torch_gen)
        ws = bundle.mapping(z2)
        fake = bundle.generate_t(before, ws, self._random_noise(batch, torch_gen))
        fake_score = bundle.discriminator(before, fake)
        loss_g = F.softplus(-fake_score).mean()
        self.opt_g.zero_grad(set_to_none=True)
        loss_g.backward()
        self.opt_g.step()
        logs["loss_g"] = float(loss_g.detach())

        if not all(np.isfinite(v) for v in logs.values()):
            raise TrainingDiverged("non-finite training loss", logs)

        self.step_count += 1
        self.bundle.meta["steps"] = self.step_count
        return logs


def _atomic_save(bundle: GeneratorBundle, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    bundle.save(tmp)
    os.replace(tmp, path)


def train(
    pairs: list[ImagePair],
    gen_config: GeneratorConfig,
    train_config: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    log_path: str | Path | None = None,
    resume_from: str | Path | None = None,
    progress: bool = False,
) -> GeneratorBundle:
    """Train on the train split of `pairs` until total_images are seen."""
    train_pairs = [p for p in pairs if p.split == "train"]
    if not train_pairs:
        raise ValueError("no pairs in the train split")
    res = train_pairs[0].before.shape[0]
    if res != gen_config.resolution:
        raise ValueError(f"dataset resolution {res} != config resolution {gen_config.resolution}")

    torch.manual_seed(train_config.seed)
    if resume_from is not None:
        bundle = GeneratorBundle.load(resume_from)
        if bundle.config != gen_config:
            raise ValueError("resume checkpoint config does not match")
    else:
        bundle = GeneratorBundle(gen_config, seed=train_config.seed)
    bundle.meta["dataset_hash"] = dataset_hash(pairs)

    trainer = Trainer(bundle, train_config)
    torch_gen = torch.Generator().manual_seed(train_config.seed + trainer.step_count)
    shuffler = np.random.default_rng(train_config.seed + trainer.step_count)

    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
    if checkpoint_dir:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    log_fh = open(log_path, "a") if log_path else None

    images_seen = int(bundle.meta.get("images_seen", 0))
    order = shuffler.permutation(len(train_pairs))
    cursor = 0
    t0 = time.time()
    try:
        while images_seen < train_config.total_images:
            if cursor + train_config.batch_size > len(order):
                order = shuffler.permutation(len(train_pairs))
                cursor = 0
            batch = [train_pairs[i] for i in order[cursor:cursor + train_config.batch_size]]
            cursor += train_config.batch_size
            before, after = pairs_to_tensors(batch)
            z = torch.randn(len(batch), gen_config.z_dim, generator=torch_gen)
            logs = trainer.train_step(before, after, z, torch_gen)
            images_seen += len(batch)
            bundle.meta["images_seen"] = images_seen
            if log_fh:
                log_fh.write(json.dumps({"step": trainer.step_count, **logs}) + "\n")
                log_fh.flush()
            if progress and trainer.step_count % 200 == 0:
                rate = images_seen / max(time.time() - t0, 1e-9)
                print(
                    f"step {trainer.step_count} images {images_seen} "
                    f"loss_d {logs['loss_d']:.3f} loss_g {logs['loss_g']:.3f} "
                    f"({rate:.0f} img/s)",
                    flush=True,
                )
            if checkpoint_dir and trainer.step_count % train_config.checkpoint_interval == 0:
                _atomic_save(bundle, checkpoint_dir / f"step-{trainer.step_count:07d}.pt")
        if checkpoint_dir:
            _atomic_save(bundle, checkpoint_dir / "final.pt")
    finally:
        if log_fh:
            log_fh.close()
    return bundle
