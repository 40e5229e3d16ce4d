"""Language-guided editing on top of a trained generator.

Two routes:

* supervised: a mapper (image + text features, fused by an MLP) predicts a
  512-dim style code, trained with L1 on rendered output while the generator
  stays frozen;
* zero-shot: gradient search over the style code guided by a joint
  image-text embedder, with optional binary-mask compositing so untouched
  pixels pass through bit-exact.

The embedder here is a small convolutional stand-in trained on caption/pair
data; anything exposing embed_image/embed_text with unit-norm outputs can
replace it. One sign note: the identity-preservation term is maximized along
with the request similarity, i.e. the objective is
-cos(f_v, f_t(r)) - lambda * cos(f_v, f_v(I)).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .editops import ImagePair
from .generator import GeneratorBundle
from .metrics import to_image, to_tensor

_TOKEN_RE = re.compile(r"[a-z]+")
UNK = "<unk>"


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def build_vocab(captions: list[str]) -> dict[str, int]:
    words = sorted({tok for cap in captions for tok in tokenize(cap)})
    return {UNK: 0, **{w: i + 1 for i, w in enumerate(words)}}


class _ConvFeatures(nn.Module):
    """Three pooled conv stages ending in a flat feature vector."""

    def __init__(self, in_ch: int, resolution: int, out_dim: int):
        super().__init__()
        if resolution < 8:
            raise ValueError("feature extractor needs resolution >= 8")
        widths = [16, 32, 64]
        layers = []
        ch = in_ch
        res = resolution
        for w in widths:
            layers.append(nn.Conv2d(ch, w, 3, padding=1))
            ch = w
            res = max(res // 2, 1)
        self.convs = nn.ModuleList(layers)
        self.fc = nn.Linear(ch * res * res, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x * 2.0 - 1.0
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
            h = F.avg_pool2d(h, 2)
        return self.fc(h.flatten(1))


class _TextFeatures(nn.Module):
    """Mean-pooled word embeddings followed by a two-layer head."""

    def __init__(self, vocab: dict[str, int], embed_dim: int, out_dim: int):
        super().__init__()
        self.vocab = dict(vocab)
        self.embed = nn.Embedding(len(vocab), embed_dim)
        self.head = nn.Sequential(
            nn.Linear(embed_dim, out_dim), nn.LeakyReLU(0.2), nn.Linear(out_dim, out_dim)
        )

    def encode_ids(self, texts: list[str]) -> torch.Tensor:
        rows = []
        for text in texts:
            toks = tokenize(text)
            if not toks:
                raise ValueError("empty text")
            ids = torch.tensor([self.vocab.get(t, 0) for t in toks])
            rows.append(self.embed(ids).mean(dim=0))
        return torch.stack(rows)

    def forward(self, texts: list[str]) -> torch.Tensor:
        return self.head(self.encode_ids(texts))


class JointEmbedder(nn.Module):
    """Shared-space embedder for (edited image in context, caption).

    embed_image(x, context) encodes an image together with the source it was
    edited from; context defaults to the image itself, which encodes "no
    edit". Both towers emit unit vectors, so cosine similarity is a dot
    product bounded in [-1, 1].
    """

    def __init__(self, vocab: dict[str, int], resolution: int, dim: int = 128,
                 text_embed_dim: int = 64, temperature: float = 0.07):
        super().__init__()
        self.dim = dim
        self.resolution = resolution
        self.image_tower = _ConvFeatures(6, resolution, dim)
        self.text_tower = _TextFeatures(vocab, text_embed_dim, dim)
        self.log_scale = nn.Parameter(torch.tensor(float(np.log(1.0 / temperature))))

    def embed_image_t(self, image: torch.Tensor, context: torch.Tensor | None = None) -> torch.Tensor:
        if context is None:
            context = image
        feats = self.image_tower(torch.cat([image, context], dim=1))
        return F.normalize(feats, dim=1)

    def embed_text_t(self, texts: list[str]) -> torch.Tensor:
        return F.normalize(self.text_tower(texts), dim=1)

    @torch.no_grad()
    def embed_image(self, image: np.ndarray, context: np.ndarray | None = None) -> np.ndarray:
        ctx = None if context is None else to_tensor(context)
        return self.embed_image_t(to_tensor(image), ctx)[0].numpy()

    @torch.no_grad()
    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_text_t([text])[0].numpy()


@dataclass
class EmbedderConfig:
    dim: int = 128
    text_embed_dim: int = 64
    steps: int = 400
    batch_size: int = 32
    lr: float = 1e-3
    temperature: float = 0.07
    seed: int = 0


def _caption(pair: ImagePair) -> str:
    return pair.recipe.caption if pair.recipe else ""


def _require_captions(pairs: list[ImagePair]) -> None:
    for p in pairs:
        if not _caption(p) or not tokenize(_caption(p)):
            raise ValueError(f"pair {p.id!r} has an empty caption")


def train_embedder(pairs: list[ImagePair], cfg: EmbedderConfig | None = None) -> JointEmbedder:
    """Symmetric contrastive training on (after-in-context-of-before, caption)."""
    cfg = cfg or EmbedderConfig()
    if len(pairs) < 500:
        raise ValueError(f"need at least 500 captioned pairs, got {len(pairs)}")
    _require_captions(pairs)
    torch.manual_seed(cfg.seed)
    resolution = pairs[0].before.shape[0]
    vocab = build_vocab([_caption(p) for p in pairs])
    model = JointEmbedder(vocab, resolution, cfg.dim, cfg.text_embed_dim, cfg.temperature)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    afters = torch.stack([to_tensor(p.after)[0] for p in pairs])
    befores = torch.stack([to_tensor(p.before)[0] for p in pairs])
    captions = [_caption(p) for p in pairs]

    model.train()
    trace = []
    for _ in range(cfg.steps):
        batch = rng.choice(len(pairs), size=min(cfg.batch_size, len(pairs)), replace=False)
        img = model.embed_image_t(afters[batch], befores[batch])
        txt = model.embed_text_t([captions[i] for i in batch])
        scale = model.log_scale.exp().clamp(max=100.0)
        logits = scale * img @ txt.T
        target = torch.arange(len(batch))
        loss = 0.5 * (F.cross_entropy(logits, target) + F.cross_entropy(logits.T, target))
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(float(loss.detach()))
    model.eval()
    model.train_trace = trace
    for p in model.parameters():
        p.requires_grad_(False)
    return model


@torch.no_grad()
def embedder_retrieval_accuracy(model: JointEmbedder, pairs: list[ImagePair],
                                batch_size: int = 32, seed: int = 0) -> float:
    """Caption-to-pair top-1 retrieval accuracy within batches of held-out data."""
    _require_captions(pairs)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    hits = 0
    total = 0
    for start in range(0, len(order), batch_size):
        batch = order[start:start + batch_size]
        if len(batch) < 2:
            continue
        img = model.embed_image_t(
            torch.stack([to_tensor(pairs[i].after)[0] for i in batch]),
            torch.stack([to_tensor(pairs[i].before)[0] for i in batch]),
        )
        txt = model.embed_text_t([_caption(pairs[i]) for i in batch])
        pred = (txt @ img.T).argmax(dim=1)
        hits += int((pred == torch.arange(len(batch))).sum())
        total += len(batch)
    if total == 0:
        raise ValueError("need at least one batch of two pairs")
    return hits / total


# --------------------------------------------------------------------------- #
# supervised mapper
# --------------------------------------------------------------------------- #

@dataclass
class MapperConfig:
    steps: int = 400
    batch_size: int = 16
    lr: float = 1e-4
    feature_dim: int = 128
    text_embed_dim: int = 64
    no_visual: bool = False
    seed: int = 0


class MapperHead(nn.Module):
    """Image + request features fused into a 512-dim style code."""

    def __init__(self, vocab: dict[str, int], resolution: int, w_dim: int,
                 cfg: MapperConfig):
        super().__init__()
        self.cfg = cfg
        self.resolution = resolution
        self.image_features = _ConvFeatures(3, resolution, cfg.feature_dim)
        self.text_features = _TextFeatures(vocab, cfg.text_embed_dim, cfg.feature_dim)
        self.fusion = nn.Sequential(
            nn.Linear(2 * cfg.feature_dim, 256),
            nn.LeakyReLU(0.2),
            nn.Linear(256, 256),
            nn.LeakyReLU(0.2),
            nn.Linear(256, w_dim),
        )

    def forward(self, images: torch.Tensor, texts: list[str]) -> torch.Tensor:
        img_feat = self.image_features(images)
        if self.cfg.no_visual:
            img_feat = torch.zeros_like(img_feat)
        txt_feat = self.text_features(texts)
        return self.fusion(torch.cat([img_feat, txt_feat], dim=1))


def predict_code(mapper: MapperHead, image: np.ndarray, request_text: str) -> np.ndarray:
    if not request_text or not tokenize(request_text):
        raise ValueError("empty text")
    with torch.no_grad():
        w = mapper(to_tensor(image), [request_text])
    return w[0].numpy()


def _render_from_w(bundle: GeneratorBundle, inputs: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Differentiable render of inputs under broadcast style w, zero noise."""
    pyramid = bundle.encoder(inputs)
    ws = w[:, None, :].expand(-1, bundle.config.n_style_layers, -1)
    return bundle.decoder(pyramid, ws, None)


def train_mapper(pairs: list[ImagePair], bundle: GeneratorBundle,
                 cfg: MapperConfig | None = None) -> MapperHead:
    """Fit the mapper with the generator frozen; L1 between render and target."""
    cfg = cfg or MapperConfig()
    if not pairs:
        raise ValueError("no training pairs")
    _require_captions(pairs)
    res = bundle.config.resolution
    if pairs[0].before.shape[:2] != (res, res):
        raise ValueError(
            f"dataset resolution {pairs[0].before.shape[:2]} != generator {res}"
        )
    torch.manual_seed(cfg.seed)
    vocab = build_vocab([_caption(p) for p in pairs])
    mapper = MapperHead(vocab, res, bundle.config.w_dim, cfg)

    hash_before = bundle.generator_hash()
    frozen = list(bundle.generator_parameters())
    flags = [p.requires_grad for p in frozen]
    for p in frozen:
        p.requires_grad_(False)

    befores = torch.stack([to_tensor(p.before)[0] for p in pairs])
    afters = torch.stack([to_tensor(p.after)[0] for p in pairs])
    captions = [_caption(p) for p in pairs]
    opt = torch.optim.Adam(mapper.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    mapper.train()
    trace = []
    try:
        for _ in range(cfg.steps):
            batch = rng.choice(len(pairs), size=min(cfg.batch_size, len(pairs)), replace=False)
            w = mapper(befores[batch], [captions[i] for i in batch])
            out = _render_from_w(bundle, befores[batch], w)
            loss = F.l1_loss(out, afters[batch])
            opt.zero_grad()
            loss.backward()
            opt.step()
            trace.append(float(loss.detach()))
    finally:
        for p, flag in zip(frozen, flags):
            p.requires_grad_(flag)
    mapper.eval()
    mapper.train_trace = trace
    if bundle.generator_hash() != hash_before:
        raise RuntimeError("generator parameters changed during mapper training")
    return mapper


@torch.no_grad()
def mapper_val_l1(mapper: MapperHead, bundle: GeneratorBundle,
                  pairs: list[ImagePair], batch_size: int = 32) -> dict[str, float]:
    """Mean L1 of mapper renders vs targets, with the input-vs-target baseline."""
    total_out = 0.0
    total_in = 0.0
    n = 0
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start:start + batch_size]
        befores = torch.stack([to_tensor(p.before)[0] for p in chunk])
        afters = torch.stack([to_tensor(p.after)[0] for p in chunk])
        w = mapper(befores, [_caption(p) for p in chunk])
        out = _render_from_w(bundle, befores, w)
        total_out += float((out - afters).abs().mean()) * len(chunk)
        total_in += float((befores - afters).abs().mean()) * len(chunk)
        n += len(chunk)
    return {"output_l1": total_out / n, "input_l1": total_in / n}


# --------------------------------------------------------------------------- #
# zero-shot editing
# --------------------------------------------------------------------------- #

LAMBDA_SWEEP = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass
class ZeroShotConfig:
    steps: int = 120
    lr: float = 0.05
    init: str = "mean_w"  # mean_w | given
    w_init: np.ndarray | None = None
    mean_w_samples: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.init not in ("mean_w", "given"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.init == "given" and self.w_init is None:
            raise ValueError("init='given' requires w_init")


@dataclass
class ZeroShotResult:
    image: np.ndarray
    w: np.ndarray
    lam: float
    objective: float
    init_objective: float
    trace: list[float] = field(default_factory=list)


def _prepare_mask(mask: np.ndarray | None, shape: tuple[int, int]) -> torch.Tensor | None:
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.ndim == 3:
        mask = mask[..., 0]
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} != image shape {shape}")
    binary = (mask > 0).astype(np.float32)
    return torch.from_numpy(binary)[None, None]


def zero_shot_edit(
    bundle: GeneratorBundle,
    embedder: JointEmbedder,
    image: np.ndarray,
    request: str,
    lam: float | tuple[float, ...] = 0.3,
    mask: np.ndarray | None = None,
    cfg: ZeroShotConfig | None = None,
):
    """Optimize a style code toward the request while staying near the input.

    Scalar lam returns one ZeroShotResult; a sequence of lams returns a
    result per value (the best has the lowest .objective). With a mask,
    background pixels of the returned image equal the input exactly.
    """
    if not request or not tokenize(request):
        raise ValueError("empty text")
    cfg = cfg or ZeroShotConfig()
    if np.ndim(lam) == 0:
        return _zero_shot_single(bundle, embedder, image, request, float(lam), mask, cfg)
    return [
        _zero_shot_single(bundle, embedder, image, request, float(v), mask, cfg)
        for v in lam
    ]


def _zero_shot_single(bundle, embedder, image, request, lam, mask, cfg) -> ZeroShotResult:
    res = bundle.config.resolution
    image = np.asarray(image, dtype=np.float32)
    if image.shape[:2] != (res, res):
        raise ValueError(f"image shape {image.shape[:2]} != generator resolution {res}")
    mask_t = _prepare_mask(mask, image.shape[:2])
    inp = to_tensor(image)

    torch.manual_seed(cfg.seed)
    if cfg.init == "given":
        w0 = torch.from_numpy(np.asarray(cfg.w_init, dtype=np.float32)).clone()
    else:
        w0 = torch.from_numpy(bundle.mean_w(n_samples=cfg.mean_w_samples, seed=cfg.seed))
    w = w0[None].clone().requires_grad_(True)
    opt = torch.optim.Adam([w], lr=cfg.lr, betas=(0.9, 0.999))

    with torch.no_grad():
        pyramid_probe = bundle.encoder(inp)  # fail fast on bad shapes
        del pyramid_probe
        text_emb = embedder.embed_text_t([request])
        identity_emb = embedder.embed_image_t(inp, inp)

    def composite(render: torch.Tensor) -> torch.Tensor:
        if mask_t is None:
            return render
        return mask_t * render + (1.0 - mask_t) * inp

    def objective_at(w_cur: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        render = composite(_render_from_w(bundle, inp, w_cur))
        emb = embedder.embed_image_t(render, inp)
        value = -(emb * text_emb).sum() - lam * (emb * identity_emb).sum()
        return value, render

    trace: list[float] = []
    with torch.no_grad():
        init_val, best_render = objective_at(w)
        init_objective = float(init_val)
        if not np.isfinite(init_objective):
            raise RuntimeError("non-finite objective at initialization")
    best = (init_objective, w.detach().clone(), best_render.detach().clone())
    trace.append(init_objective)

    for _ in range(cfg.steps):
        value, render = objective_at(w)
        if not torch.isfinite(value):
            raise RuntimeError("non-finite objective during optimization")
        opt.zero_grad()
        value.backward()
        opt.step()
        with torch.no_grad():
            current, render = objective_at(w)
        current_f = float(current)
        trace.append(current_f)
        if current_f < best[0]:
            best = (current_f, w.detach().clone(), render.detach().clone())

    out = to_image(best[2])
    if mask is not None:
        # bit-exact background: splice original pixels straight through
        mask3 = (_prepare_mask(mask, image.shape[:2])[0, 0].numpy() > 0)[..., None]
        out = np.where(mask3, out, image)
    return ZeroShotResult(
        image=out.astype(np.float32),
        w=best[1][0].numpy(),
        lam=lam,
        objective=best[0],
        init_objective=init_objective,
        trace=trace,
    )


# --------------------------------------------------------------------------- #
# persistence
# --------------------------------------------------------------------------- #

def save_embedder(model: JointEmbedder, path) -> None:
    torch.save(
        {
            "vocab": model.text_tower.vocab,
            "resolution": model.resolution,
            "dim": model.dim,
            "text_embed_dim": model.text_tower.embed.embedding_dim,
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_embedder(path) -> JointEmbedder:
    blob = torch.load(path, weights_only=False)
    model = JointEmbedder(
        blob["vocab"], blob["resolution"], blob["dim"], blob["text_embed_dim"]
    )
    model.load_state_dict(blob["state_dict"])
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model
