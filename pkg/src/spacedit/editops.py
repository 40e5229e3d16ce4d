"""Procedural global color/tone editing ops and paired dataset synthesis.

Images are float32 arrays of shape (H, W, 3) with values in [0, 1].
Every primitive is deterministic, clamps its output to [0, 1], and has an
identity parameter setting that leaves any input bit-unchanged.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

TAG_VOCAB = (
    "dark", "blue", "red", "white", "vivid", "vintage", "warm", "brown",
    "clear", "clarity", "green", "natural", "yellow", "orange", "retro",
    "cool", "black", "vignette", "vibrant",
)

# Declared closed parameter ranges per op kind.
PARAM_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "brightness": {"delta": (-0.5, 0.5)},
    "contrast": {"factor": (0.5, 2.0)},
    "saturation": {"factor": (0.0, 2.5)},
    "hue_rotate": {"degrees": (-90.0, 90.0)},
    "white_balance": {"temp": (-0.35, 0.35)},
    "channel_gamma": {
        "gamma_r": (0.4, 2.5),
        "gamma_g": (0.4, 2.5),
        "gamma_b": (0.4, 2.5),
    },
    "split_tone": {
        "shadow_hue": (0.0, 360.0),
        "highlight_hue": (0.0, 360.0),
        "amount": (0.0, 0.4),
    },
    "vignette": {"strength": (0.0, 0.6)},
}

IDENTITY_PARAMS: dict[str, dict[str, float]] = {
    "brightness": {"delta": 0.0},
    "contrast": {"factor": 1.0},
    "saturation": {"factor": 1.0},
    "hue_rotate": {"degrees": 0.0},
    "white_balance": {"temp": 0.0},
    "channel_gamma": {"gamma_r": 1.0, "gamma_g": 1.0, "gamma_b": 1.0},
    "split_tone": {"shadow_hue": 0.0, "highlight_hue": 0.0, "amount": 0.0},
    "vignette": {"strength": 0.0},
}

# Rec. 601 luma weights, shared by saturation / split-tone gating.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


class ParameterError(ValueError):
    """An op parameter is missing, unknown, or outside its declared range."""


@dataclass(frozen=True)
class PrimitiveOp:
    kind: str
    params: dict[str, float]

    def __post_init__(self) -> None:
        if self.kind not in PARAM_RANGES:
            raise ParameterError(f"unknown op kind {self.kind!r}")
        ranges = PARAM_RANGES[self.kind]
        missing = set(ranges) - set(self.params)
        extra = set(self.params) - set(ranges)
        if missing or extra:
            raise ParameterError(
                f"{self.kind}: missing params {sorted(missing)}, unknown params {sorted(extra)}"
            )
        for name, value in self.params.items():
            lo, hi = ranges[name]
            if not (lo <= value <= hi):
                raise ParameterError(
                    f"{self.kind}.{name}={value} outside declared range [{lo}, {hi}]"
                )

    def is_identity(self) -> bool:
        ident = IDENTITY_PARAMS[self.kind]
        if self.kind == "split_tone":
            return self.params["amount"] == 0.0
        return all(self.params[k] == v for k, v in ident.items())


@dataclass(frozen=True)
class EditRecipe:
    ops: tuple[PrimitiveOp, ...]
    tags: frozenset[str]
    caption: str
    family_id: int

    def __post_init__(self) -> None:
        bad = set(self.tags) - set(TAG_VOCAB)
        if bad:
            raise ParameterError(f"tags outside vocabulary: {sorted(bad)}")

    def to_json(self) -> dict:
        return {
            "family_id": self.family_id,
            "ops": [{"kind": op.kind, "params": dict(sorted(op.params.items()))} for op in self.ops],
            "tags": sorted(self.tags),
            "caption": self.caption,
        }

    @staticmethod
    def from_json(data: dict) -> "EditRecipe":
        ops = tuple(PrimitiveOp(o["kind"], dict(o["params"])) for o in data["ops"])
        return EditRecipe(
            ops=ops,
            tags=frozenset(data["tags"]),
            caption=data["caption"],
            family_id=int(data["family_id"]),
        )


@dataclass
class ImagePair:
    id: str
    before: np.ndarray
    after: np.ndarray
    recipe: EditRecipe | None
    split: str


def identity_recipe() -> EditRecipe:
    return EditRecipe(ops=(), tags=frozenset({"natural"}), caption=derive_caption(()), family_id=-1)


# --------------------------------------------------------------------------- #
# primitives
# --------------------------------------------------------------------------- #

def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ParameterError(f"expected (H, W, 3) image, got shape {image.shape}")
    return image


def _clip01(image: np.ndarray) -> np.ndarray:
    return np.clip(image, 0.0, 1.0, out=image)


def _hue_matrix(degrees: float) -> np.ndarray:
    # Luminance-preserving linear hue rotation (SVG feColorMatrix hueRotate).
    c = np.cos(np.deg2rad(degrees))
    s = np.sin(np.deg2rad(degrees))
    return np.array(
        [
            [0.213 + 0.787 * c - 0.213 * s, 0.715 - 0.715 * c - 0.715 * s, 0.072 - 0.072 * c + 0.928 * s],
            [0.213 - 0.213 * c + 0.143 * s, 0.715 + 0.285 * c + 0.140 * s, 0.072 - 0.072 * c - 0.283 * s],
            [0.213 - 0.213 * c - 0.787 * s, 0.715 - 0.715 * c + 0.715 * s, 0.072 + 0.928 * c + 0.072 * s],
        ],
        dtype=np.float32,
    )


def _hue_to_rgb(degrees: float) -> np.ndarray:
    """Fully saturated RGB color on the hue wheel, as float32 triple."""
    h = (degrees % 360.0) / 60.0
    x = 1.0 - abs(h % 2.0 - 1.0)
    sector = int(h) % 6
    r, g, b = [(1, x, 0), (x, 1, 0), (0, 1, x), (0, x, 1), (x, 0, 1), (1, 0, x)][sector]
    return np.array([r, g, b], dtype=np.float32)


def apply_primitive(image: np.ndarray, op: PrimitiveOp) -> np.ndarray:
    """Apply one editing primitive; output is a new clamped float32 image."""
    image = _check_image(image)
    if op.is_identity():
        return image.copy()
    p = op.params
    if op.kind == "brightness":
        out = image + np.float32(p["delta"])
    elif op.kind == "contrast":
        mean = image.mean(dtype=np.float32)
        out = mean + np.float32(p["factor"]) * (image - mean)
    elif op.kind == "saturation":
        gray = image @ _LUMA
        out = gray[..., None] + np.float32(p["factor"]) * (image - gray[..., None])
    elif op.kind == "hue_rotate":
        out = image @ _hue_matrix(p["degrees"]).T
    elif op.kind == "white_balance":
        t = np.float32(p["temp"])
        out = image * np.array([1.0 + t, 1.0, 1.0 - t], dtype=np.float32)
    elif op.kind == "channel_gamma":
        gammas = np.array([p["gamma_r"], p["gamma_g"], p["gamma_b"]], dtype=np.float32)
        out = np.power(np.clip(image, 0.0, 1.0), gammas)
    elif op.kind == "split_tone":
        luma = image @ _LUMA
        shadows = (luma < 0.5)[..., None]
        tint_s = _hue_to_rgb(p["shadow_hue"]) - np.float32(0.5)
        tint_h = _hue_to_rgb(p["highlight_hue"]) - np.float32(0.5)
        out = image + np.float32(p["amount"]) * np.where(shadows, tint_s, tint_h)
    elif op.kind == "vignette":
        h, w = image.shape[:2]
        yy = ((np.arange(h, dtype=np.float32) + 0.5) / (h / 2.0) - 1.0) ** 2
        xx = ((np.arange(w, dtype=np.float32) + 0.5) / (w / 2.0) - 1.0) ** 2
        falloff = 1.0 - np.float32(p["strength"]) * (yy[:, None] + xx[None, :]) / 2.0
        out = image * falloff[..., None]
    else:  # pragma: no cover - guarded by PrimitiveOp validation
        raise ParameterError(f"unknown op kind {op.kind!r}")
    return _clip01(np.asarray(out, dtype=np.float32))


def apply_recipe(image: np.ndarray, recipe: EditRecipe) -> np.ndarray:
    """Apply all ops in listed order (left fold of apply_primitive)."""
    out = _check_image(image).copy()
    for op in recipe.ops:
        out = apply_primitive(out, op)
    return out


# --------------------------------------------------------------------------- #
# tags and captions
# --------------------------------------------------------------------------- #

def derive_tags(ops: tuple[PrimitiveOp, ...]) -> frozenset[str]:
    """Rule-based style tags from parameter signs and magnitudes."""
    tags: set[str] = set()
    for op in ops:
        p = op.params
        if op.kind == "brightness":
            d = p["delta"]
            if d <= -0.35:
                tags |= {"dark", "black"}
            elif d <= -0.15:
                tags.add("dark")
            elif d >= 0.35:
                tags |= {"clear", "white"}
            elif d >= 0.15:
                tags.add("clear")
        elif op.kind == "contrast":
            f = p["factor"]
            if f >= 1.3:
                tags.add("clarity")
            elif f <= 0.7:
                tags.add("retro")
        elif op.kind == "saturation":
            f = p["factor"]
            if f >= 1.8:
                tags |= {"vivid", "vibrant"}
            elif f >= 1.4:
                tags.add("vivid")
            elif f <= 0.6:
                tags.add("vintage")
        elif op.kind == "hue_rotate":
            deg = p["degrees"]
            if deg >= 25.0:
                tags.add("green")
            elif deg <= -25.0:
                tags.add("red")
        elif op.kind == "white_balance":
            t = p["temp"]
            if t >= 0.2:
                tags |= {"warm", "orange"}
            elif t >= 0.08:
                tags.add("warm")
            elif t <= -0.2:
                tags |= {"cool", "blue"}
            elif t <= -0.08:
                tags.add("cool")
        elif op.kind == "channel_gamma":
            if p["gamma_r"] <= 0.8:
                tags.add("red")
            if p["gamma_g"] <= 0.8:
                tags.add("green")
            if p["gamma_b"] <= 0.8:
                tags.add("blue")
            if p["gamma_b"] >= 1.5:
                tags.add("yellow")
            if p["gamma_b"] >= 1.8 and p["gamma_r"] <= 1.1:
                tags.add("brown")
        elif op.kind == "split_tone":
            a = p["amount"]
            if a >= 0.25:
                tags |= {"vintage", "retro"}
            elif a >= 0.12:
                tags.add("vintage")
            if a >= 0.12 and 15.0 <= p["highlight_hue"] <= 70.0:
                tags.add("warm")
        elif op.kind == "vignette":
            if p["strength"] >= 0.15:
                tags.add("vignette")
    if not tags:
        tags.add("natural")
    return frozenset(tags)


def _param_digest(op: PrimitiveOp) -> int:
    blob = op.kind + "|" + "|".join(f"{k}={op.params[k]:.6f}" for k in sorted(op.params))
    return int.from_bytes(hashlib.blake2s(blob.encode()).digest()[:4], "big")


def _magnitude_word(x: float, lo: float, hi: float) -> str:
    if abs(x) < lo:
        return "slightly "
    if abs(x) >= hi:
        return "strongly "
    return ""


_PHRASES = {
    ("brightness", "+"): ("increase brightness", "make it brighter", "brighten the image"),
    ("brightness", "-"): ("decrease brightness", "make it darker", "darken the image"),
    ("contrast", "+"): ("boost contrast", "increase the contrast", "add punchy contrast"),
    ("contrast", "-"): ("soften contrast", "reduce the contrast", "flatten the contrast"),
    ("saturation", "+"): ("boost saturation", "make the colors more vivid", "saturate the colors"),
    ("saturation", "-"): ("mute the colors", "desaturate the image", "fade the colors"),
    ("hue_rotate", "+"): ("shift hues toward green", "rotate the hues green"),
    ("hue_rotate", "-"): ("shift hues toward red", "rotate the hues red"),
    ("white_balance", "+"): ("add warm tone", "make it warmer", "warm up the photo"),
    ("white_balance", "-"): ("add cool tone", "make it cooler", "cool down the photo"),
    ("split_tone", "+"): ("apply split toning", "tint shadows and highlights", "add a split tone"),
    ("vignette", "+"): ("add a vignette", "darken the corners", "apply vignetting"),
}


def _op_clause(op: PrimitiveOp) -> str | None:
    p = op.params
    pick = _param_digest(op)
    if op.kind == "brightness":
        d = p["delta"]
        if d == 0:
            return None
        phrases = _PHRASES[("brightness", "+" if d > 0 else "-")]
        return _magnitude_word(d, 0.15, 0.3) + phrases[pick % len(phrases)]
    if op.kind == "contrast":
        f = p["factor"]
        if f == 1:
            return None
        phrases = _PHRASES[("contrast", "+" if f > 1 else "-")]
        return _magnitude_word(f - 1, 0.2, 0.45) + phrases[pick % len(phrases)]
    if op.kind == "saturation":
        f = p["factor"]
        if f == 1:
            return None
        phrases = _PHRASES[("saturation", "+" if f > 1 else "-")]
        return _magnitude_word(f - 1, 0.3, 0.8) + phrases[pick % len(phrases)]
    if op.kind == "hue_rotate":
        deg = p["degrees"]
        if deg == 0:
            return None
        phrases = _PHRASES[("hue_rotate", "+" if deg > 0 else "-")]
        return _magnitude_word(deg, 20.0, 50.0) + phrases[pick % len(phrases)]
    if op.kind == "white_balance":
        t = p["temp"]
        if t == 0:
            return None
        phrases = _PHRASES[("white_balance", "+" if t > 0 else "-")]
        return _magnitude_word(t, 0.08, 0.2) + phrases[pick % len(phrases)]
    if op.kind == "channel_gamma":
        deltas = {"red": p["gamma_r"] - 1, "green": p["gamma_g"] - 1, "blue": p["gamma_b"] - 1}
        channel, delta = max(deltas.items(), key=lambda kv: abs(kv[1]))
        if delta == 0:
            return None
        if delta < 0:
            return f"lift the {channel} channel"
        if channel == "blue":
            return ("tone down the blues for a yellow cast", "add a golden yellow cast")[pick % 2]
        return f"tone down the {channel} channel"
    if op.kind == "split_tone":
        if p["amount"] == 0:
            return None
        phrases = _PHRASES[("split_tone", "+")]
        return _magnitude_word(p["amount"], 0.1, 0.25) + phrases[pick % len(phrases)]
    if op.kind == "vignette":
        if p["strength"] == 0:
            return None
        phrases = _PHRASES[("vignette", "+")]
        return _magnitude_word(p["strength"], 0.15, 0.4) + phrases[pick % len(phrases)]
    return None


def derive_caption(ops: tuple[PrimitiveOp, ...]) -> str:
    """Deterministic short text description of a recipe."""
    clauses = [c for c in (_op_clause(op) for op in ops) if c]
    if not clauses:
        return "keep the image as it is"
    if len(clauses) == 1:
        return clauses[0]
    return ", ".join(clauses[:-1]) + " and " + clauses[-1]


# --------------------------------------------------------------------------- #
# style families and recipe sampling
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class _OpTemplate:
    kind: str
    ranges: dict[str, tuple[float, float]]
    required: bool = True


@dataclass(frozen=True)
class _Family:
    name: str
    ops: tuple[_OpTemplate, ...]


FAMILIES: tuple[_Family, ...] = (
    _Family("moody_dark", (
        _OpTemplate("brightness", {"delta": (-0.38, -0.2)}),
        _OpTemplate("contrast", {"factor": (1.2, 1.55)}),
        _OpTemplate("vignette", {"strength": (0.25, 0.5)}, required=False),
    )),
    _Family("bright_airy", (
        _OpTemplate("brightness", {"delta": (0.2, 0.38)}),
        _OpTemplate("contrast", {"factor": (0.6, 0.85)}),
        _OpTemplate("saturation", {"factor": (0.7, 0.95)}, required=False),
    )),
    _Family("warm_vintage", (
        _OpTemplate("white_balance", {"temp": (0.14, 0.3)}),
        _OpTemplate("split_tone", {"shadow_hue": (200.0, 250.0), "highlight_hue": (25.0, 55.0), "amount": (0.15, 0.3)}),
        _OpTemplate("contrast", {"factor": (0.7, 0.9)}, required=False),
    )),
    _Family("cool_blue", (
        _OpTemplate("white_balance", {"temp": (-0.3, -0.14)}),
        _OpTemplate("brightness", {"delta": (-0.1, 0.08)}, required=False),
        _OpTemplate("contrast", {"factor": (1.0, 1.25)}, required=False),
    )),
    _Family("vivid_punch", (
        _OpTemplate("saturation", {"factor": (1.6, 2.3)}),
        _OpTemplate("contrast", {"factor": (1.15, 1.5)}),
    )),
    _Family("faded_retro", (
        _OpTemplate("saturation", {"factor": (0.25, 0.55)}),
        _OpTemplate("brightness", {"delta": (0.05, 0.18)}),
        _OpTemplate("contrast", {"factor": (0.62, 0.8)}, required=False),
    )),
    _Family("green_shift", (
        _OpTemplate("hue_rotate", {"degrees": (35.0, 75.0)}),
        _OpTemplate("saturation", {"factor": (1.1, 1.5)}, required=False),
    )),
    _Family("golden_hour", (
        _OpTemplate("channel_gamma", {"gamma_r": (0.85, 1.05), "gamma_g": (0.95, 1.15), "gamma_b": (1.6, 2.3)}),
        _OpTemplate("white_balance", {"temp": (0.06, 0.18)}, required=False),
        _OpTemplate("vignette", {"strength": (0.1, 0.3)}, required=False),
    )),
)


def sample_recipe(rng_seed: int, family_id: int | None = None) -> EditRecipe:
    """Draw a 1-4 op recipe from a style family; deterministic given seed."""
    rng = np.random.default_rng(rng_seed)
    if family_id is None:
        family_id = int(rng.integers(len(FAMILIES)))
    if not 0 <= family_id < len(FAMILIES):
        raise ParameterError(f"unknown family_id {family_id}")
    family = FAMILIES[family_id]
    ops = []
    for tmpl in family.ops:
        keep = tmpl.required or rng.random() >= 0.4
        params = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in sorted(tmpl.ranges.items())}
        if keep and len(ops) < 4:
            ops.append(PrimitiveOp(tmpl.kind, params))
    ops_t = tuple(ops)
    return EditRecipe(ops=ops_t, tags=derive_tags(ops_t), caption=derive_caption(ops_t), family_id=family_id)


# --------------------------------------------------------------------------- #
# procedural base images
# --------------------------------------------------------------------------- #

def _random_color(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.1, 0.9, size=3).astype(np.float32)


def _gradient_image(rng: np.random.Generator, res: int) -> np.ndarray:
    c0, c1 = _random_color(rng), _random_color(rng)
    angle = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:res, 0:res].astype(np.float32) / max(res - 1, 1)
    t = (np.cos(angle) * xx + np.sin(angle) * yy + 1.0) / 2.0
    return c0 + t[..., None] * (c1 - c0)


def _shapes_image(rng: np.random.Generator, res: int) -> np.ndarray:
    img = _gradient_image(rng, res)
    yy, xx = np.mgrid[0:res, 0:res].astype(np.float32)
    for _ in range(int(rng.integers(2, 5))):
        color = _random_color(rng)
        if rng.random() < 0.5:
            cy, cx = rng.uniform(0, res, size=2)
            r = rng.uniform(res * 0.1, res * 0.35)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        else:
            y0, x0 = rng.uniform(0, res * 0.7, size=2)
            hh, ww = rng.uniform(res * 0.15, res * 0.5, size=2)
            mask = (yy >= y0) & (yy < y0 + hh) & (xx >= x0) & (xx < x0 + ww)
        img[mask] = color
    return img


def _value_noise_image(rng: np.random.Generator, res: int) -> np.ndarray:
    cells = int(rng.integers(3, 7))
    grid = rng.uniform(0.08, 0.92, size=(cells, cells, 3)).astype(np.float32)
    src = np.linspace(0, cells - 1, res, dtype=np.float32)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, cells - 1)
    frac = src - i0
    rows = grid[i0] * (1 - frac[:, None, None]) + grid[i1] * frac[:, None, None]
    out = rows[:, i0] * (1 - frac[None, :, None]) + rows[:, i1] * frac[None, :, None]
    return out


def generate_base_image(rng: np.random.Generator, res: int) -> np.ndarray:
    """One procedural base image: gradient, shapes, or value-noise texture."""
    style = int(rng.integers(3))
    img = (_gradient_image, _shapes_image, _value_noise_image)[style](rng, res)
    return np.clip(img, 0.02, 0.98).astype(np.float32)


# --------------------------------------------------------------------------- #
# dataset synthesis and manifest IO
# --------------------------------------------------------------------------- #

def _quantize(image: np.ndarray) -> np.ndarray:
    return (np.round(np.clip(image, 0, 1) * 255.0) / np.float32(255.0)).astype(np.float32)


def _split_assignment(ids: list[str]) -> dict[str, str]:
    """80/10/10 split with exact sizes, ordered by a deterministic id hash."""
    keyed = sorted(ids, key=lambda i: (hashlib.sha1(i.encode()).hexdigest(), i))
    n = len(keyed)
    n_train, n_val = int(n * 0.8), int(n * 0.1)
    assignment = {}
    for rank, pair_id in enumerate(keyed):
        if rank < n_train:
            assignment[pair_id] = "train"
        elif rank < n_train + n_val:
            assignment[pair_id] = "val"
        else:
            assignment[pair_id] = "test"
    return assignment


def synthesize_dataset(
    n_pairs: int,
    seed: int,
    resolution: int = 32,
    base_dir: str | Path | None = None,
    family_cycle: bool = True,
) -> list[ImagePair]:
    """Build n_pairs before/after pairs with known recipes.

    Base images come from `base_dir` (PNG files, resized) when given, else
    from the procedural generator, so the pipeline is self-contained.
    Pairs cycle through style families by default to keep families balanced.
    """
    if n_pairs < 10:
        raise ParameterError(f"n_pairs must be >= 10, got {n_pairs}")
    sources: list[Path] | None = None
    if base_dir is not None:
        sources = sorted(Path(base_dir).glob("*.png"))
        if not sources:
            raise ParameterError(f"no PNG base images found in {base_dir}")

    ids = [f"pair-{i:05d}" for i in range(n_pairs)]
    splits = _split_assignment(ids)
    pairs = []
    for i, pair_id in enumerate(ids):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        if sources is None:
            before = generate_base_image(rng, resolution)
        else:
            with Image.open(sources[i % len(sources)]) as im:
                im = im.convert("RGB").resize((resolution, resolution), Image.LANCZOS)
                before = np.asarray(im, dtype=np.float32) / 255.0
        before = _quantize(before)
        family = i % len(FAMILIES) if family_cycle else None
        recipe = sample_recipe(seed * 1_000_003 + i, family)
        after = apply_recipe(before, recipe)
        pairs.append(ImagePair(id=pair_id, before=before, after=after, recipe=recipe, split=splits[pair_id]))
    return pairs


def save_image(image: np.ndarray, path: str | Path) -> None:
    arr = np.round(np.clip(image, 0, 1) * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(Path(path))


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def save_dataset(pairs: list[ImagePair], out_dir: str | Path) -> Path:
    """Write PNGs plus a JSON-lines manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    with manifest.open("w") as fh:
        for pair in pairs:
            before_path = f"images/{pair.id}_before.png"
            after_path = f"images/{pair.id}_after.png"
            save_image(pair.before, out_dir / before_path)
            save_image(pair.after, out_dir / after_path)
            row = {
                "id": pair.id,
                "before_path": before_path,
                "after_path": after_path,
                "recipe": pair.recipe.to_json() if pair.recipe else None,
                "tags": sorted(pair.recipe.tags) if pair.recipe else [],
                "caption": pair.recipe.caption if pair.recipe else "",
                "split": pair.split,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest


def load_dataset(manifest_path: str | Path) -> list[ImagePair]:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    pairs = []
    with manifest_path.open() as fh:
        for line in fh:
            row = json.loads(line)
            recipe = EditRecipe.from_json(row["recipe"]) if row.get("recipe") else None
            pairs.append(
                ImagePair(
                    id=row["id"],
                    before=load_image(root / row["before_path"]),
                    after=load_image(root / row["after_path"]),
                    recipe=recipe,
                    split=row["split"],
                )
            )
    return pairs
