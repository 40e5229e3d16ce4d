"""Conditional style-based generator for global photo edits.

An image encoder replaces the usual learned constant: its 4x4 feature map
seeds the decoder and its intermediate maps are added back as skips, so the
network can only restyle its input, never invent unrelated content. A latent
z is mapped to a style code w that modulates every decoder convolution.

Images cross this module's API as float arrays in [0, 1]; the net works in
[-1, 1] internally.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .metrics import to_image, to_tensor


@dataclass(frozen=True)
class GeneratorConfig:
    resolution: int = 32
    z_dim: int = 512
    w_dim: int = 512
    mapping_depth: int = 8
    base_channels: int = 16
    max_channels: int = 512
    mapping_lr_mul: float = 0.01
    shallow: bool = False
    comod: bool = False

    def __post_init__(self) -> None:
        r = self.resolution
        if r < 8 or (r & (r - 1)) != 0:
            raise ValueError(f"resolution must be a power of two >= 8, got {r}")
        if self.w_dim != self.z_dim:
            raise ValueError("z and w must share one dimension")

    @property
    def n_stages(self) -> int:
        return int(math.log2(self.resolution // 4))

    @property
    def n_style_layers(self) -> int:
        # one base conv + two convs per upsampling stage + output projection
        return 2 * self.n_stages + 2

    def channels(self, res: int) -> int:
        return min(self.base_channels * self.resolution // res, self.max_channels)

    def channel_schedule(self) -> dict[int, int]:
        return {4 * 2**i: self.channels(4 * 2**i) for i in range(self.n_stages + 1)}

    def noise_resolutions(self) -> list[int]:
        """Spatial size of the noise buffer for each noisy style layer."""
        out = [4]
        for s in range(1, self.n_stages + 1):
            out += [4 * 2**s, 4 * 2**s]
        return out


@dataclass
class StyleCode:
    w: np.ndarray
    per_layer: list[np.ndarray] | None = None
    noise: list[np.ndarray] | None = None

    def layer_stack(self, n_layers: int) -> np.ndarray:
        if self.per_layer is not None:
            if len(self.per_layer) != n_layers:
                raise ValueError(
                    f"per_layer has {len(self.per_layer)} codes, expected {n_layers}"
                )
            return np.stack(self.per_layer)
        return np.repeat(np.asarray(self.w, dtype=np.float32)[None], n_layers, axis=0)


# --------------------------------------------------------------------------- #
# equalized-learning-rate primitives
# --------------------------------------------------------------------------- #

class EqualizedWeight(nn.Module):
    """N(0,1)-initialized weight with the He constant applied at runtime."""

    def __init__(self, shape: list[int], lr_mul: float = 1.0):
        super().__init__()
        self.c = lr_mul / math.sqrt(int(np.prod(shape[1:])))
        self.weight = nn.Parameter(torch.randn(shape) / lr_mul)

    def forward(self) -> torch.Tensor:
        return self.weight * self.c


class EqualizedLinear(nn.Module):
    def __init__(self, in_features: int, out_features: int, bias: float = 0.0, lr_mul: float = 1.0):
        super().__init__()
        self.weight = EqualizedWeight([out_features, in_features], lr_mul)
        self.bias = nn.Parameter(torch.ones(out_features) * bias)
        self.lr_mul = lr_mul

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.weight(), bias=self.bias * self.lr_mul)


class EqualizedConv2d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, padding: int = 0):
        super().__init__()
        self.padding = padding
        self.weight = EqualizedWeight([out_ch, in_ch, kernel, kernel])
        self.bias = nn.Parameter(torch.zeros(out_ch))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, self.weight(), bias=self.bias, padding=self.padding)


def modulated_conv(x: torch.Tensor, weight: torch.Tensor, style: torch.Tensor,
                   demodulate: bool = True, eps: float = 1e-8) -> torch.Tensor:
    """Per-sample style-scaled convolution via grouped conv.

    x: (B, Cin, H, W), weight: (Cout, Cin, kh, kw), style: (B, Cin).
    """
    b, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin_w != cin or style.shape != (b, cin):
        raise ValueError(
            f"shape mismatch: x {tuple(x.shape)}, weight {tuple(weight.shape)}, style {tuple(style.shape)}"
        )
    weights = weight[None] * style[:, None, :, None, None]
    if demodulate:
        sigma = torch.rsqrt((weights**2).sum(dim=(2, 3, 4), keepdim=True) + eps)
        weights = weights * sigma
    x = x.reshape(1, b * cin, h, w)
    weights = weights.reshape(b * cout, cin, kh, kw)
    out = F.conv2d(x, weights, padding=(kh // 2, kw // 2), groups=b)
    return out.reshape(b, cout, h, w)


# --------------------------------------------------------------------------- #
# mapping network
# --------------------------------------------------------------------------- #

class MappingNetwork(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.layers = nn.ModuleList(
            EqualizedLinear(cfg.z_dim, cfg.w_dim, lr_mul=cfg.mapping_lr_mul)
            for _ in range(cfg.mapping_depth)
        )

    @staticmethod
    def pixel_norm(z: torch.Tensor) -> torch.Tensor:
        # float64 so that w(z) and w(a*z) agree to the last float32 bit
        z64 = z.double()
        rms2 = z64.square().mean(dim=-1, keepdim=True)
        if bool((rms2 == 0).any()):
            raise ValueError("cannot normalize a zero latent vector")
        return (z64 * torch.rsqrt(rms2)).to(z.dtype)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = self.pixel_norm(z)
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2)
        return x


# --------------------------------------------------------------------------- #
# encoder
# --------------------------------------------------------------------------- #

class ImageEncoder(nn.Module):
    """Downsampling pyramid; the 4x4 map seeds the decoder, the rest skip in."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        self.from_rgb = EqualizedConv2d(3, cfg.channels(cfg.resolution), 1)
        convs = []
        res = cfg.resolution
        while res > 4:
            convs.append(EqualizedConv2d(cfg.channels(res), cfg.channels(res // 2), 3, padding=1))
            res //= 2
        self.convs = nn.ModuleList(convs)

    def forward(self, image: torch.Tensor) -> dict[int, torch.Tensor]:
        cfg = self.cfg
        if image.shape[-2:] != (cfg.resolution, cfg.resolution) or image.shape[1] != 3:
            raise ValueError(
                f"expected (B, 3, {cfg.resolution}, {cfg.resolution}) input, got {tuple(image.shape)}"
            )
        x = F.leaky_relu(self.from_rgb(image * 2.0 - 1.0), 0.2)
        pyramid: dict[int, torch.Tensor] = {}
        res = cfg.resolution
        for conv in self.convs:
            x = F.avg_pool2d(F.leaky_relu(conv(x), 0.2), 2)
            res //= 2
            pyramid[res] = x
        return pyramid


# --------------------------------------------------------------------------- #
# decoder
# --------------------------------------------------------------------------- #

class StyleBlock(nn.Module):
    """Modulated 3x3 conv with noise injection; one style layer."""

    def __init__(self, cfg: GeneratorConfig, in_ch: int, out_ch: int, w_sensitive: bool = True):
        super().__init__()
        self.w_sensitive = w_sensitive
        style_in = cfg.w_dim + (cfg.channels(4) if cfg.comod else 0)
        self.affine = EqualizedLinear(style_in, in_ch, bias=1.0)
        self.weight = EqualizedWeight([out_ch, in_ch, 3, 3])
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.noise_gain = nn.Parameter(torch.zeros(1))

    def forward(self, x: torch.Tensor, w: torch.Tensor, noise: torch.Tensor | None) -> torch.Tensor:
        if not self.w_sensitive:
            w = torch.zeros_like(w)
        style = self.affine(w)
        x = modulated_conv(x, self.weight(), style, demodulate=True)
        if noise is not None:
            x = x + self.noise_gain * noise
        return F.leaky_relu(x + self.bias[None, :, None, None], 0.2)


class OutputProjection(nn.Module):
    """Modulated 1x1 projection to RGB; the last style layer, no demodulation."""

    def __init__(self, cfg: GeneratorConfig, in_ch: int):
        super().__init__()
        style_in = cfg.w_dim + (cfg.channels(4) if cfg.comod else 0)
        self.affine = EqualizedLinear(style_in, in_ch, bias=1.0)
        self.weight = EqualizedWeight([3, in_ch, 1, 1])
        self.bias = nn.Parameter(torch.zeros(3))

    def forward(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        style = self.affine(w)
        x = modulated_conv(x, self.weight(), style, demodulate=False)
        return x + self.bias[None, :, None, None]


class Decoder(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        n_layers = cfg.n_style_layers
        # with the shallow flag only the top third of layers keeps w input
        cutoff = (2 * n_layers) // 3 if cfg.shallow else 0

        self.base = StyleBlock(cfg, cfg.channels(4), cfg.channels(4), w_sensitive=0 >= cutoff)
        blocks = []
        skips = []
        for s in range(1, cfg.n_stages + 1):
            res = 4 * 2**s
            c_in, c_out = cfg.channels(res // 2), cfg.channels(res)
            blocks.append(StyleBlock(cfg, c_in, c_out, w_sensitive=2 * s - 1 >= cutoff))
            blocks.append(StyleBlock(cfg, c_out, c_out, w_sensitive=2 * s >= cutoff))
            if res <= cfg.resolution // 2:
                # encoder and decoder widths agree here by schedule, but guard anyway
                enc_ch = cfg.channels(res)
                skips.append(EqualizedConv2d(enc_ch, c_out, 1) if enc_ch != c_out else nn.Identity())
        self.blocks = nn.ModuleList(blocks)
        self.skips = nn.ModuleList(skips)
        self.to_rgb = OutputProjection(cfg, cfg.channels(cfg.resolution))

    def forward(self, pyramid: dict[int, torch.Tensor], ws: torch.Tensor,
                noise: list[torch.Tensor] | None) -> torch.Tensor:
        """pyramid from ImageEncoder; ws (B, n_style_layers, w_dim); noise
        per noisy layer or None for all-zero buffers."""
        cfg = self.cfg
        if 4 not in pyramid:
            raise ValueError("pyramid is missing its 4x4 base level")
        if ws.shape[1] != cfg.n_style_layers:
            raise ValueError(f"expected {cfg.n_style_layers} style layers, got {ws.shape[1]}")

        def buf(i: int) -> torch.Tensor | None:
            return None if noise is None else noise[i]

        if cfg.comod:
            # co-modulation: image identity feature joins every style input
            global_feat = pyramid[4].mean(dim=(2, 3))
            ws = torch.cat(
                [ws, global_feat[:, None, :].expand(-1, ws.shape[1], -1)], dim=2
            )

        x = self.base(pyramid[4], ws[:, 0], buf(0))
        slot = 1
        for s in range(1, cfg.n_stages + 1):
            res = 4 * 2**s
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = self.blocks[2 * (s - 1)](x, ws[:, slot], buf(slot))
            slot += 1
            x = self.blocks[2 * (s - 1) + 1](x, ws[:, slot], buf(slot))
            slot += 1
            if res <= cfg.resolution // 2:
                if res not in pyramid:
                    raise ValueError(f"pyramid is missing the {res}x{res} level")
                x = x + self.skips[s - 1](pyramid[res])
        rgb = self.to_rgb(x, ws[:, slot])
        return (torch.tanh(rgb) + 1.0) / 2.0


# --------------------------------------------------------------------------- #
# discriminator
# --------------------------------------------------------------------------- #

class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = EqualizedConv2d(in_ch, in_ch, 3, padding=1)
        self.conv2 = EqualizedConv2d(in_ch, out_ch, 3, padding=1)
        self.shortcut = EqualizedConv2d(in_ch, out_ch, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.leaky_relu(self.conv1(x), 0.2)
        y = F.avg_pool2d(F.leaky_relu(self.conv2(y), 0.2), 2)
        s = F.avg_pool2d(self.shortcut(x), 2)
        return (y + s) / math.sqrt(2.0)


class MiniBatchStdDev(nn.Module):
    def __init__(self, group_size: int = 4):
        super().__init__()
        self.group_size = group_size

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b = x.shape[0]
        g = min(self.group_size, b)
        while b % g != 0:
            g -= 1
        grouped = x.view(g, b // g, *x.shape[1:])
        std = torch.sqrt(grouped.var(dim=0, unbiased=False) + 1e-8)
        feat = std.mean(dim=(1, 2, 3), keepdim=True)
        feat = feat.repeat(g, 1, x.shape[2], x.shape[3])
        return torch.cat([x, feat], dim=1)


class ConditionalDiscriminator(nn.Module):
    """Realness score for an (input, edited) image pair, 6-channel input."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        self.from_rgb = EqualizedConv2d(6, cfg.channels(cfg.resolution), 1)
        blocks = []
        res = cfg.resolution
        while res > 4:
            blocks.append(ResidualBlock(cfg.channels(res), cfg.channels(res // 2)))
            res //= 2
        self.blocks = nn.ModuleList(blocks)
        self.std_dev = MiniBatchStdDev()
        final_ch = cfg.channels(4)
        self.conv = EqualizedConv2d(final_ch + 1, final_ch, 3, padding=1)
        self.fc = EqualizedLinear(final_ch * 16, final_ch)
        self.out = EqualizedLinear(final_ch, 1)

    def forward(self, image_in: torch.Tensor, image_out: torch.Tensor) -> torch.Tensor:
        if image_in.shape != image_out.shape:
            raise ValueError(f"shape mismatch: {tuple(image_in.shape)} vs {tuple(image_out.shape)}")
        x = torch.cat([image_in, image_out], dim=1) * 2.0 - 1.0
        x = F.leaky_relu(self.from_rgb(x), 0.2)
        for block in self.blocks:
            x = block(x)
        x = self.std_dev(x)
        x = F.leaky_relu(self.conv(x), 0.2)
        x = F.leaky_relu(self.fc(x.flatten(1)), 0.2)
        return self.out(x)[:, 0]


# --------------------------------------------------------------------------- #
# bundle: the checkpointable whole
# --------------------------------------------------------------------------- #

CHECKPOINT_VERSION = 1


class GeneratorBundle:
    """Config + encoder/mapping/decoder/discriminator + training metadata."""

    def __init__(self, config: GeneratorConfig, seed: int = 0):
        self.config = config
        torch.manual_seed(seed)
        self.encoder = ImageEncoder(config)
        self.mapping = MappingNetwork(config)
        self.decoder = Decoder(config)
        self.discriminator = ConditionalDiscriminator(config)
        self.meta: dict = {"steps": 0, "seed": seed, "dataset_hash": None, "images_seen": 0}

    # -- low-level torch paths ------------------------------------------------

    def generator_modules(self) -> list[nn.Module]:
        return [self.encoder, self.mapping, self.decoder]

    def generator_parameters(self):
        for m in self.generator_modules():
            yield from m.parameters()

    def eval_mode(self) -> "GeneratorBundle":
        for m in (*self.generator_modules(), self.discriminator):
            m.eval()
        return self

    def map_latent_t(self, z: torch.Tensor) -> torch.Tensor:
        return self.mapping(z)

    def synthesize_t(self, pyramid: dict[int, torch.Tensor], ws: torch.Tensor,
                     noise: list[torch.Tensor] | None = None) -> torch.Tensor:
        return self.decoder(pyramid, ws, noise)

    def generate_t(self, images: torch.Tensor, ws: torch.Tensor,
                   noise: list[torch.Tensor] | None = None) -> torch.Tensor:
        """images (B,3,R,R) in [0,1]; ws (B, w_dim) broadcast or (B, L, w_dim)."""
        pyramid = self.encoder(images)
        if ws.ndim == 2:
            ws = ws[:, None, :].expand(-1, self.config.n_style_layers, -1)
        return self.decoder(pyramid, ws, noise)

    # -- numpy-facing API -----------------------------------------------------

    def map_latent(self, z: np.ndarray) -> np.ndarray:
        z_t = torch.as_tensor(np.asarray(z, dtype=np.float32))
        if not torch.isfinite(z_t).all():
            raise ValueError("latent vector must be finite")
        with torch.no_grad():
            return self.mapping(z_t[None])[0].numpy()

    def encode_image(self, image: np.ndarray) -> dict[int, np.ndarray]:
        with torch.no_grad():
            pyramid = self.encoder(to_tensor(image))
        return {res: t[0].numpy() for res, t in pyramid.items()}

    def _style_tensors(self, style) -> tuple[torch.Tensor, list[torch.Tensor] | None]:
        if isinstance(style, StyleCode):
            ws = torch.as_tensor(style.layer_stack(self.config.n_style_layers))[None]
            noise = None
            if style.noise is not None:
                resolutions = self.config.noise_resolutions()
                if len(style.noise) != len(resolutions):
                    raise ValueError(
                        f"expected {len(resolutions)} noise buffers, got {len(style.noise)}"
                    )
                noise = []
                for buf, res in zip(style.noise, resolutions):
                    arr = np.asarray(buf, dtype=np.float32)
                    if arr.shape != (res, res):
                        raise ValueError(f"noise buffer shape {arr.shape} != ({res}, {res})")
                    noise.append(torch.as_tensor(arr)[None, None])
            return ws.float(), noise
        w = torch.as_tensor(np.asarray(style, dtype=np.float32))
        ws = w[None, None, :].expand(1, self.config.n_style_layers, -1)
        return ws, None

    def generate(self, image: np.ndarray, z_or_style) -> np.ndarray:
        """G(I_in, *): accepts a z vector (routed through mapping), a w
        vector, or a full StyleCode. Deterministic; absent noise = zeros."""
        if isinstance(z_or_style, StyleCode):
            ws, noise = self._style_tensors(z_or_style)
        else:
            arr = np.asarray(z_or_style, dtype=np.float32)
            if arr.ndim != 1 or arr.shape[0] != self.config.z_dim:
                raise ValueError(f"expected a {self.config.z_dim}-vector or StyleCode")
            ws, noise = self._style_tensors(self.map_latent(arr))
        with torch.no_grad():
            out = self.generate_t(to_tensor(image), ws, noise)
        return to_image(out)

    def generate_from_w(self, image: np.ndarray, w: np.ndarray) -> np.ndarray:
        """G(I_in, w) without the mapping network; w is already in W space."""
        ws, _ = self._style_tensors(np.asarray(w, dtype=np.float32))
        with torch.no_grad():
            out = self.generate_t(to_tensor(image), ws)
        return to_image(out)

    def discriminate(self, image_in: np.ndarray, image_out: np.ndarray) -> float:
        with torch.no_grad():
            return float(self.discriminator(to_tensor(image_in), to_tensor(image_out))[0])

    def mean_w(self, n_samples: int = 10_000, seed: int = 0) -> np.ndarray:
        """Empirical mean of map_latent over random z."""
        gen = torch.Generator().manual_seed(seed)
        total = torch.zeros(self.config.w_dim)
        batch = 500
        with torch.no_grad():
            for start in range(0, n_samples, batch):
                n = min(batch, n_samples - start)
                z = torch.randn(n, self.config.z_dim, generator=gen)
                total += self.mapping(z).sum(dim=0)
        return (total / n_samples).numpy()

    # -- persistence ----------------------------------------------------------

    def state(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "encoder": self.encoder.state_dict(),
            "mapping": self.mapping.state_dict(),
            "decoder": self.decoder.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "meta": dict(self.meta),
        }

    def save(self, path) -> None:
        torch.save(self.state(), path)

    @classmethod
    def load(cls, path) -> "GeneratorBundle":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        if "version" not in blob:
            raise ValueError("checkpoint missing version field")
        if blob["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {blob['version']}")
        bundle = cls(GeneratorConfig(**blob["config"]))
        bundle.encoder.load_state_dict(blob["encoder"])
        bundle.mapping.load_state_dict(blob["mapping"])
        bundle.decoder.load_state_dict(blob["decoder"])
        bundle.discriminator.load_state_dict(blob["discriminator"])
        bundle.meta = dict(blob["meta"])
        return bundle

    def generator_hash(self) -> str:
        """Digest of all generator (not discriminator) parameters."""
        h = hashlib.sha256()
        for module in self.generator_modules():
            for name, tensor in sorted(module.state_dict().items()):
                h.update(name.encode())
                h.update(tensor.numpy().tobytes())
        return h.hexdigest()


def checkpoint_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
