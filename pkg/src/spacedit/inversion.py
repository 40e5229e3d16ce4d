"""Conditional inversion into the editing space.

Given a (source, target) pair and a trained generator, find the code w (and
optionally per-layer noise) whose render G(source, w, n) matches the target
perceptually. Identity inversion is the special case target = source; its
code w0 anchors strength interpolation. Pixel errors are reported in 0-255
mean-absolute units throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .generator import GeneratorBundle, StyleCode
from .metrics import FeatureExtractor, default_extractor, to_tensor


@dataclass(frozen=True)
class InversionConfig:
    steps: int = 300
    lambda_noise: float = 1e5
    # Many codes render identically on a single image, so the bare objective
    # picks an arbitrary one; a small pull toward the starting code selects
    # the smallest displacement, which is what transfers to other images.
    lambda_w: float = 1e-3
    init: str = "mean_w"  # mean_w | random | given
    w_init: np.ndarray | None = None
    lr: float = 0.1
    lr_rampdown: float = 0.25
    lr_rampup: float = 0.05
    optimize_noise: bool = True
    track_best: bool = True
    seed: int = 0
    mean_w_samples: int = 10_000
    loss_resolution: int | None = None  # compute the objective on downsampled renders

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lambda_noise < 0:
            raise ValueError("lambda_noise must be >= 0")
        if self.lambda_w < 0:
            raise ValueError("lambda_w must be >= 0")
        if self.init not in ("mean_w", "random", "given"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.init == "given" and self.w_init is None:
            raise ValueError("init='given' requires w_init")


@dataclass
class InversionResult:
    style: StyleCode
    init_error: float
    final_error: float
    trace: list[float] = field(default_factory=list)


def _noise_reg_per_sample(buffer: torch.Tensor) -> torch.Tensor:
    """(B, 1, H, W) -> (B,): squared normalized shift-1 autocorrelations in x
    and y, accumulated over 2x downsamplings until the buffer is <= 8 wide."""
    n = buffer
    total = None
    while True:
        sq = n.square().mean(dim=(2, 3))
        corr_x = (n * torch.roll(n, shifts=1, dims=3)).mean(dim=(2, 3))
        corr_y = (n * torch.roll(n, shifts=1, dims=2)).mean(dim=(2, 3))
        safe = torch.where(sq > 0, sq, torch.ones_like(sq))
        term = (((corr_x / safe) ** 2 + (corr_y / safe) ** 2) * (sq > 0)).sum(dim=1)
        total = term if total is None else total + term
        if min(n.shape[2], n.shape[3]) <= 8:
            break
        n = F.avg_pool2d(n, 2)
    return total


def noise_regularizer(buffers) -> torch.Tensor:
    """Total autocorrelation penalty over a list of noise buffers.

    Accepts 2D arrays/tensors or (B, 1, H, W) tensors; differentiable.
    """
    total = torch.zeros(())
    for buf in buffers:
        n = buf if torch.is_tensor(buf) else torch.as_tensor(np.asarray(buf, dtype=np.float32))
        if n.ndim == 2:
            n = n[None, None]
        total = total + _noise_reg_per_sample(n).sum()
    return total


def _lr_schedule(base_lr: float, step: int, steps: int, rampdown: float, rampup: float) -> float:
    t = step / max(steps, 1)
    ramp = min(1.0, (1.0 - t) / rampdown) if rampdown > 0 else 1.0
    ramp = 0.5 - 0.5 * math.cos(ramp * math.pi)
    if rampup > 0:
        ramp = ramp * min(1.0, t / rampup)
    return base_lr * ramp


def _maybe_downsample(x: torch.Tensor, target_res: int | None) -> torch.Tensor:
    if target_res is None or x.shape[-1] <= target_res:
        return x
    factor = x.shape[-1] // target_res
    return F.avg_pool2d(x, factor)


def _init_w(bundle: GeneratorBundle, cfg: InversionConfig) -> np.ndarray:
    if cfg.init == "given":
        w = np.asarray(cfg.w_init, dtype=np.float32)
        if w.shape != (bundle.config.w_dim,):
            raise ValueError(f"w_init must have shape ({bundle.config.w_dim},)")
        return w
    if cfg.init == "random":
        gen = torch.Generator().manual_seed(cfg.seed)
        z = torch.randn(1, bundle.config.z_dim, generator=gen)
        with torch.no_grad():
            return bundle.mapping(z)[0].numpy()
    return bundle.mean_w(cfg.mean_w_samples, seed=cfg.seed)


def invert_conditional_batch(
    bundle: GeneratorBundle,
    images_in: list[np.ndarray],
    images_tgt: list[np.ndarray],
    cfg: InversionConfig = InversionConfig(),
    extractor: FeatureExtractor | None = None,
) -> list[InversionResult]:
    """Invert many pairs in one optimization.

    Adam updates are elementwise, and every loss term is a sum of per-pair
    terms that touch disjoint variables, so this matches per-pair runs.
    """
    if len(images_in) != len(images_tgt):
        raise ValueError("images_in and images_tgt must have equal length")
    if not images_in:
        return []
    extractor = extractor or default_extractor()
    n = len(images_in)
    src = torch.cat([to_tensor(im) for im in images_in])
    tgt = torch.cat([to_tensor(im) for im in images_tgt])
    if src.shape[-1] != bundle.config.resolution:
        raise ValueError(
            f"images at {src.shape[-1]}px, bundle expects {bundle.config.resolution}px"
        )

    w0 = torch.from_numpy(_init_w(bundle, cfg)).float()
    w_var = w0[None].repeat(n, 1).requires_grad_(True)
    gen = torch.Generator().manual_seed(cfg.seed)
    noise_vars: list[torch.Tensor] = []
    if cfg.optimize_noise:
        for r in bundle.config.noise_resolutions():
            noise_vars.append(torch.randn(n, 1, r, r, generator=gen).requires_grad_(True))
    opt = torch.optim.Adam([w_var, *noise_vars], lr=cfg.lr, betas=(0.9, 0.999))

    init_errors = (src - tgt).abs().mean(dim=(1, 2, 3)) * 255.0
    best_err = torch.full((n,), float("inf"))
    best_w = w_var.detach().clone()
    best_noise = [v.detach().clone() for v in noise_vars]
    trace: list[np.ndarray] = []

    with torch.no_grad():
        pyramid = bundle.encoder(src)
    n_layers = bundle.config.n_style_layers

    for step in range(cfg.steps):
        lr = _lr_schedule(cfg.lr, step, cfg.steps, cfg.lr_rampdown, cfg.lr_rampup)
        for group in opt.param_groups:
            group["lr"] = lr
        ws = w_var[:, None, :].expand(-1, n_layers, -1)
        render = bundle.decoder(pyramid, ws, noise_vars if noise_vars else None)
        percep = extractor.distance(
            _maybe_downsample(render, cfg.loss_resolution),
            _maybe_downsample(tgt, cfg.loss_resolution),
        )
        loss_vec = percep
        if cfg.lambda_w > 0:
            loss_vec = loss_vec + cfg.lambda_w * ((w_var - w0[None]) ** 2).sum(dim=1)
        if noise_vars and cfg.lambda_noise > 0:
            reg = sum(_noise_reg_per_sample(v) for v in noise_vars)
            loss_vec = loss_vec + cfg.lambda_noise * reg
        loss = loss_vec.sum()
        if not torch.isfinite(loss):
            raise RuntimeError(f"inversion objective became non-finite at step {step}")

        with torch.no_grad():
            pix_err = (render - tgt).abs().mean(dim=(1, 2, 3)) * 255.0
            if cfg.track_best:
                better = pix_err < best_err
                best_err = torch.where(better, pix_err, best_err)
                best_w[better] = w_var.detach()[better]
                for bn, v in zip(best_noise, noise_vars):
                    bn[better] = v.detach()[better]
            else:
                best_err = pix_err
                best_w = w_var.detach().clone()
                best_noise = [v.detach().clone() for v in noise_vars]
        trace.append(loss_vec.detach().numpy().copy())

        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        # keep noise zero-mean unit-variance so the signal lives in w
        if noise_vars:
            with torch.no_grad():
                for v in noise_vars:
                    v -= v.mean(dim=(2, 3), keepdim=True)
                    v *= (v.square().mean(dim=(2, 3), keepdim=True) + 1e-12).rsqrt()

    trace_arr = np.stack(trace, axis=1)  # (n, steps)
    results = []
    for i in range(n):
        noise = [bn[i, 0].numpy().copy() for bn in best_noise] if noise_vars else None
        style = StyleCode(w=best_w[i].numpy().copy(), noise=noise)
        results.append(
            InversionResult(
                style=style,
                init_error=float(init_errors[i]),
                final_error=float(best_err[i]),
                trace=[float(v) for v in trace_arr[i]],
            )
        )
    return results


def invert_conditional(
    bundle: GeneratorBundle,
    image_in: np.ndarray,
    image_tgt: np.ndarray,
    cfg: InversionConfig = InversionConfig(),
    extractor: FeatureExtractor | None = None,
) -> InversionResult:
    """argmin over (w, noise) of perceptual(target, render) + noise penalty."""
    return invert_conditional_batch(bundle, [image_in], [image_tgt], cfg, extractor)[0]


def invert_identity(
    bundle: GeneratorBundle,
    image: np.ndarray,
    cfg: InversionConfig = InversionConfig(),
    extractor: FeatureExtractor | None = None,
) -> InversionResult:
    """Recover the identity code w0 that reproduces the image itself."""
    return invert_conditional(bundle, image, image, cfg, extractor)


def interpolate_codes(w0: np.ndarray, w: np.ndarray, alpha: float) -> np.ndarray:
    """w' = (1 - alpha) * w0 + alpha * w; alpha outside [0,1] extrapolates."""
    w0 = np.asarray(w0, dtype=np.float32)
    w = np.asarray(w, dtype=np.float32)
    if w0.shape != w.shape:
        raise ValueError(f"shape mismatch: {w0.shape} vs {w.shape}")
    return (1.0 - np.float32(alpha)) * w0 + np.float32(alpha) * w


def transfer_style(bundle: GeneratorBundle, w: np.ndarray, image: np.ndarray) -> np.ndarray:
    """Apply an inverted editing code to a new image; no optimization."""
    return bundle.generate_from_w(image, w)


def average_codes(codes) -> np.ndarray:
    codes = [np.asarray(c, dtype=np.float32) for c in codes]
    if not codes:
        raise ValueError("cannot average an empty code list")
    return np.mean(np.stack(codes), axis=0)
