"""Unsupervised semantic directions in the editing space.

The decoder modulates each layer through an affine map of w, so the right
singular vectors of the stacked affine weights are the directions w responds
to most strongly (closed-form factorization, no training). Traversal renders
w0 + alpha * direction; layer sensitivity probes which layers react to w.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .generator import GeneratorBundle, StyleCode
from .metrics import FeatureExtractor, default_extractor, perceptual_distance


@dataclass
class SemanticBasis:
    directions: np.ndarray  # (k, w_dim), unit rows, orthogonal
    eigenvalues: np.ndarray  # (k,), nonnegative, descending
    layer_range: tuple[int, ...]


def style_affine_matrices(bundle: GeneratorBundle) -> list[np.ndarray]:
    """Effective per-layer affine weights, one (in_ch, w_dim) matrix per
    style layer, in layer order. Only the w columns, runtime scaling applied."""
    decoder = bundle.decoder
    w_dim = bundle.config.w_dim
    layers = [decoder.base, *decoder.blocks, decoder.to_rgb]
    mats = []
    with torch.no_grad():
        for layer in layers:
            mats.append(layer.affine.weight()[:, :w_dim].numpy().copy())
    return mats


def layer_resolutions(bundle: GeneratorBundle) -> list[int]:
    """Feature resolution each style layer operates at."""
    return bundle.config.noise_resolutions() + [bundle.config.resolution]


def sefa_from_matrix(a: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenvectors of A^T A via SVD of A; rows sign-canonicalized."""
    a = np.asarray(a, dtype=np.float64)
    if k < 1 or k > a.shape[1]:
        raise ValueError(f"k must be in [1, {a.shape[1]}], got {k}")
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    eigenvalues = np.zeros(a.shape[1])
    eigenvalues[: s.shape[0]] = s**2
    directions = vh[:k].copy()
    for row in directions:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return directions.astype(np.float32), eigenvalues[:k].astype(np.float64)


def sefa_directions(bundle: GeneratorBundle, layer_range, k: int) -> SemanticBasis:
    """Semantic basis from the style-affine weights over layer_range."""
    layer_range = tuple(layer_range)
    n_layers = bundle.config.n_style_layers
    if not layer_range:
        raise ValueError("layer_range must not be empty")
    if any(not 0 <= i < n_layers for i in layer_range):
        raise ValueError(f"layer indices must lie in [0, {n_layers})")
    mats = style_affine_matrices(bundle)
    stacked = np.concatenate([mats[i] for i in layer_range], axis=0)
    directions, eigenvalues = sefa_from_matrix(stacked, k)
    return SemanticBasis(directions=directions, eigenvalues=eigenvalues, layer_range=layer_range)


def traverse_direction(bundle: GeneratorBundle, image: np.ndarray, w0: np.ndarray,
                       direction: np.ndarray, alpha: float) -> np.ndarray:
    """Render G(I, w0 + alpha * direction)."""
    direction = np.asarray(direction, dtype=np.float32)
    norm = float(np.linalg.norm(direction))
    if abs(norm - 1.0) > 1e-3:
        raise ValueError(f"direction must be unit-norm, got |d| = {norm:.4f}")
    w = np.asarray(w0, dtype=np.float32) + np.float32(alpha) * direction
    return bundle.generate_from_w(image, w)


def traversal_strip(bundle: GeneratorBundle, image: np.ndarray, w0: np.ndarray,
                    direction: np.ndarray, alphas) -> list[np.ndarray]:
    return [traverse_direction(bundle, image, w0, direction, a) for a in alphas]


@dataclass
class LayerSensitivity:
    scores: list[float]
    resolutions: list[int]


def layer_sensitivity(
    bundle: GeneratorBundle,
    probe_images: list[np.ndarray],
    perturb_scale: float,
    seed: int = 0,
    w0s: list[np.ndarray] | None = None,
    extractor: FeatureExtractor | None = None,
) -> LayerSensitivity:
    """Perceptual response to perturbing a single style layer.

    One fixed unit vector (from seed) perturbs each layer in turn so scores
    are comparable across layers. w0s are per-image anchor codes; when absent
    the mean-w anchor stands in.
    """
    if len(probe_images) < 4:
        raise ValueError("need at least 4 probe images")
    extractor = extractor or default_extractor()
    cfg = bundle.config
    rng = np.random.default_rng(seed)
    u = rng.normal(size=cfg.w_dim).astype(np.float32)
    u /= np.linalg.norm(u)

    if w0s is None:
        w0s = [bundle.mean_w(2000, seed=seed)] * len(probe_images)
    if len(w0s) != len(probe_images):
        raise ValueError("w0s must match probe_images in length")

    n_layers = cfg.n_style_layers
    scores = np.zeros(n_layers)
    for image, w0 in zip(probe_images, w0s):
        w0 = np.asarray(w0, dtype=np.float32)
        base = bundle.generate(image, StyleCode(w=w0))
        for layer in range(n_layers):
            per_layer = [w0.copy() for _ in range(n_layers)]
            per_layer[layer] = w0 + np.float32(perturb_scale) * u
            perturbed = bundle.generate(image, StyleCode(w=w0, per_layer=per_layer))
            scores[layer] += perceptual_distance(base, perturbed, extractor)
    scores /= len(probe_images)
    return LayerSensitivity(scores=[float(s) for s in scores],
                            resolutions=layer_resolutions(bundle))
