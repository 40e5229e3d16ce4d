"""Evaluation metrics: L1, SSIM, perceptual and Frechet feature distances.

Pixel metrics take (H, W, 3) arrays in [0, 1].  Feature-based metrics run a
fixed-seed random convolutional net: no pretrained weights are downloaded, so
absolute values are not comparable with published LPIPS/FID numbers, but they
are deterministic given the seed and consistent across runs.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import torch
import torch.nn.functional as F
from numpy.lib.stride_tricks import sliding_window_view

_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def l1_error(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute pixel difference."""
    a, b = _check_pair(a, b)
    return float(np.abs(a - b).mean())


def _gaussian_kernel(size: int = 7, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity with a 7x7 Gaussian window, valid windows only."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < 7 or a.shape[1] < 7:
        raise ValueError(f"image {a.shape} smaller than the 7x7 window")
    k = _gaussian_kernel()

    def moments(x):
        windows = sliding_window_view(x, (7, 7), axis=(0, 1))
        return np.tensordot(windows, k, axes=([3, 4], [0, 1]))

    mu_a, mu_b = moments(a), moments(b)
    var_a = moments(a * a) - mu_a**2
    var_b = moments(b * b) - mu_b**2
    cov = moments(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mu_a**2 + mu_b**2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return float((num / den).mean())


class FeatureExtractor(torch.nn.Module):
    """Fixed-seed conv net giving multi-scale perceptual features and a
    pooled feature vector for distribution distances."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        widths = [3, 16, 32, 64]
        self.convs = torch.nn.ModuleList()
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            conv = torch.nn.Conv2d(c_in, c_out, 3, padding=1)
            with torch.no_grad():
                conv.weight.copy_(
                    torch.randn(conv.weight.shape, generator=gen) / (3.0 * c_in**0.5)
                )
                conv.bias.zero_()
            self.convs.append(conv)
        for p in self.parameters():
            p.requires_grad_(False)

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Three feature scales, each unit-normalized along channels."""
        x = x * 2.0 - 1.0
        out = []
        for i, conv in enumerate(self.convs):
            if i > 0:
                x = F.avg_pool2d(x, 2)
            x = F.leaky_relu(conv(x), 0.2)
            out.append(x / torch.sqrt((x * x).sum(dim=1, keepdim=True) + 1e-10))
        return out

    def distance(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """Differentiable perceptual distance between (B, 3, H, W) batches.

        Raw pixels count as scale 0: the conv features are channel-normalized
        and so nearly blind to absolute level, and a distance built only from
        them has its minimum off the true colors.
        """
        if x.shape != y.shape:
            raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
        fx, fy = self.features(x), self.features(y)
        per_scale = [((x - y) ** 2).mean(dim=(1, 2, 3))]
        per_scale += [((a - b) ** 2).mean(dim=(1, 2, 3)) for a, b in zip(fx, fy)]
        return torch.stack(per_scale, dim=0).sum(dim=0)

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        """Global-average-pooled deepest features, (B, 64)."""
        x = x * 2.0 - 1.0
        for i, conv in enumerate(self.convs):
            if i > 0:
                x = F.avg_pool2d(x, 2)
            x = F.leaky_relu(conv(x), 0.2)
        return x.mean(dim=(2, 3))


_EXTRACTORS: dict[int, FeatureExtractor] = {}


def default_extractor(seed: int = 0) -> FeatureExtractor:
    if seed not in _EXTRACTORS:
        _EXTRACTORS[seed] = FeatureExtractor(seed)
    return _EXTRACTORS[seed]


def to_tensor(image: np.ndarray) -> torch.Tensor:
    """(H, W, 3) [0,1] array -> (1, 3, H, W) float32 tensor."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3), got {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def to_image(tensor: torch.Tensor) -> np.ndarray:
    """(1|B, 3, H, W) tensor -> (H, W, 3) float32 array, clipped to [0,1]."""
    t = tensor.detach()
    if t.ndim == 4:
        t = t[0]
    arr = t.clamp(0, 1).cpu().numpy().transpose(1, 2, 0)
    return np.ascontiguousarray(arr, dtype=np.float32)


def perceptual_distance(a: np.ndarray, b: np.ndarray, extractor: FeatureExtractor | None = None) -> float:
    extractor = extractor or default_extractor()
    with torch.no_grad():
        return float(extractor.distance(to_tensor(a), to_tensor(b))[0])


def pooled_features(images: list[np.ndarray] | np.ndarray, extractor: FeatureExtractor | None = None) -> np.ndarray:
    extractor = extractor or default_extractor()
    batch = torch.cat([to_tensor(img) for img in images], dim=0)
    with torch.no_grad():
        return extractor.pooled(batch).cpu().numpy().astype(np.float64)


def frechet_distance(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    fa = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    fb = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    if fa.shape[0] < 2 or fb.shape[0] < 2:
        raise ValueError("need at least 2 samples per set")
    mu_a, mu_b = fa.mean(axis=0), fb.mean(axis=0)
    cov_a = np.cov(fa, rowvar=False)
    cov_b = np.cov(fb, rowvar=False)
    covmean = scipy.linalg.sqrtm(cov_a @ cov_b)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a + cov_b - 2.0 * covmean))
    if value < -1e-6:
        raise ArithmeticError(f"frechet distance came out negative: {value}")
    return max(value, 0.0)


def diversity_lpips(bundle, inputs, n_samples: int = 10, seed: int = 0,
                    extractor: FeatureExtractor | None = None) -> float:
    """Mean pairwise perceptual distance over n_samples random-z outputs per input."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    z_dim = getattr(getattr(bundle, "config", None), "z_dim", 512)
    rng = np.random.default_rng(seed)
    dists = []
    for image in inputs:
        zs = rng.standard_normal((n_samples, z_dim)).astype(np.float32)
        outs = [bundle.generate(image, z) for z in zs]
        for i in range(n_samples):
            for j in range(i + 1, n_samples):
                dists.append(perceptual_distance(outs[i], outs[j], extractor))
    return float(np.mean(dists))


def stack_variance(outputs: np.ndarray) -> float:
    """Per-pixel population variance across the first axis, averaged."""
    stack = np.asarray(outputs, dtype=np.float64)
    return float(stack.var(axis=0).mean())


def image_variance(apply_control, image: np.ndarray, controls) -> float:
    """Output variance across exactly 10 controls (texts or codes).

    apply_control(image, control) must return an output image.
    """
    controls = list(controls)
    if len(controls) != 10:
        raise ValueError(f"expected exactly 10 controls, got {len(controls)}")
    return stack_variance(np.stack([apply_control(image, c) for c in controls]))
