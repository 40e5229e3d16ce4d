"""Command-line interface.

Every command works inside a workspace directory (datasets/, checkpoints/,
indexes/, sessions/, reports/), resolved from --workspace or the
SPACEDIT_WORKSPACE environment variable. Exit codes: 0 success, 2 for
configuration problems (bad flags, missing files), 1 for runtime failures.
"""
from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import editops
from .generator import GeneratorBundle, GeneratorConfig
from .inversion import (
    InversionConfig,
    interpolate_codes,
    invert_conditional,
    invert_conditional_batch,
    invert_identity,
)
from .latent_analysis import layer_sensitivity, sefa_directions, traversal_strip
from .lgie import (
    EmbedderConfig,
    ZeroShotConfig,
    load_embedder,
    save_embedder,
    train_embedder,
    zero_shot_edit,
)
from .metrics import (
    FeatureExtractor,
    diversity_lpips,
    frechet_distance,
    pooled_features,
)
from .reporting import (
    save_cluster_report,
    save_eval_report,
    save_traversal_strip,
    write_csv,
    write_json,
)
from .spacesearch import (
    build_index,
    customized_purity,
    knn_query,
    load_index,
    save_index,
    spherical_kmeans,
    summarize_clusters,
)
from .training import TrainConfig, train
from .workspace import Workspace, resolve_workspace


class ConfigError(click.ClickException):
    exit_code = 2


def _guard(fn):
    """Map config mistakes to exit 2 and runtime failures to exit 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, FileNotFoundError, NotADirectoryError, KeyError,
                json.JSONDecodeError) as exc:
            raise ConfigError(str(exc)) from exc
        except Exception as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _workspace(ctx: click.Context) -> Workspace:
    return resolve_workspace(ctx.obj.get("workspace"))


def _resolve_dataset(ws: Workspace, name: str) -> Path:
    """Accept a manifest path, a dataset directory, or a name under datasets/."""
    for candidate in (Path(name), ws.datasets / name):
        if candidate.is_file():
            return candidate
        if (candidate / "manifest.jsonl").is_file():
            return candidate / "manifest.jsonl"
    raise ConfigError(f"dataset {name!r} not found (no manifest.jsonl)")


def _resolve_checkpoint(ws: Workspace, name: str) -> Path:
    for candidate in (Path(name), ws.checkpoints / name,
                      ws.checkpoints / name / "final.pt"):
        if candidate.is_file():
            return candidate
    raise ConfigError(f"checkpoint {name!r} not found")


def _resolve_index(ws: Workspace, name: str) -> Path:
    for candidate in (Path(name), ws.indexes / name, ws.indexes / f"{name}.jsonl"):
        if candidate.is_file():
            return candidate
    raise ConfigError(f"index {name!r} not found")


def _resolve_embedder(ws: Workspace, name: str) -> Path:
    """Existing file wins; a bare name lives in the workspace embedders dir."""
    for candidate in (Path(name), ws.embedders / name, ws.embedders / f"{name}.pt"):
        if candidate.is_file():
            return candidate
    if "/" in name or name.endswith(".pt"):
        return Path(name)
    return ws.embedders / f"{name}.pt"


def _load_pairs(ws: Workspace, dataset: str) -> list[editops.ImagePair]:
    return editops.load_dataset(_resolve_dataset(ws, dataset))


@click.group()
@click.option("--workspace", envvar="SPACEDIT_WORKSPACE", default=None,
              help="Workspace root (default ./workspace or $SPACEDIT_WORKSPACE).")
@click.pass_context
def main(ctx: click.Context, workspace: str | None) -> None:
    """Editing-space toolkit: synthesize data, train, invert, search, edit."""
    ctx.ensure_object(dict)
    ctx.obj["workspace"] = workspace


@main.command()
@click.option("--n", "n_pairs", default=100, show_default=True, help="Number of pairs.")
@click.option("--seed", default=0, show_default=True)
@click.option("--resolution", default=32, show_default=True)
@click.option("--base-dir", default=None, help="Optional directory of source PNGs.")
@click.option("--name", default=None, help="Dataset name (default toy-n{n}-s{seed}).")
@click.pass_context
@_guard
def synth(ctx, n_pairs, seed, resolution, base_dir, name):
    """Synthesize a before/after dataset with known recipes."""
    ws = _workspace(ctx)
    name = name or f"toy-n{n_pairs}-s{seed}"
    pairs = editops.synthesize_dataset(n_pairs, seed, resolution, base_dir)
    manifest = editops.save_dataset(pairs, ws.datasets / name)
    counts = {s: sum(1 for p in pairs if p.split == s) for s in ("train", "val", "test")}
    click.echo(f"wrote {manifest} ({counts['train']}/{counts['val']}/{counts['test']} train/val/test)")


@main.command(name="train")
@click.option("--dataset", required=True)
@click.option("--total-images", default=20_000, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--base-channels", default=16, show_default=True)
@click.option("--max-channels", default=128, show_default=True)
@click.option("--checkpoint-interval", default=2_000, show_default=True)
@click.option("--name", default=None, help="Checkpoint name (default run-{seed}).")
@click.option("--resume", is_flag=True, help="Continue from the latest step checkpoint.")
@click.pass_context
@_guard
def train_cmd(ctx, dataset, total_images, batch_size, seed, base_channels,
              max_channels, checkpoint_interval, name, resume):
    """Train the conditional generator on a synthesized dataset."""
    ws = _workspace(ctx)
    pairs = _load_pairs(ws, dataset)
    resolution = pairs[0].before.shape[0]
    name = name or f"run-{seed}"
    out_dir = ws.checkpoints / name
    out_dir.mkdir(parents=True, exist_ok=True)

    resume_from = None
    if resume:
        steps = sorted(out_dir.glob("step-*.pt"))
        if not steps:
            raise ConfigError(f"--resume given but no step checkpoints in {out_dir}")
        resume_from = steps[-1]

    gen_cfg = GeneratorConfig(resolution=resolution, base_channels=base_channels,
                              max_channels=max_channels)
    train_cfg = TrainConfig(total_images=total_images, batch_size=batch_size,
                            seed=seed, checkpoint_interval=checkpoint_interval)
    bundle = train(pairs, gen_cfg, train_cfg, checkpoint_dir=out_dir,
                   log_path=out_dir / "log.jsonl", resume_from=resume_from,
                   progress=True)
    final = out_dir / "final.pt"
    click.echo(f"wrote {final} (hash {bundle.generator_hash()[:12]})")


@main.command()
@click.option("--checkpoint", required=True)
@click.option("--dataset", required=True)
@click.option("--pair-id", required=True)
@click.option("--identity", is_flag=True, help="Invert before -> before instead.")
@click.option("--steps", default=250, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
@_guard
def invert(ctx, checkpoint, dataset, pair_id, identity, steps, seed):
    """Invert one pair into its editing code; write render + trace report."""
    ws = _workspace(ctx)
    bundle = GeneratorBundle.load(_resolve_checkpoint(ws, checkpoint))
    pairs = {p.id: p for p in _load_pairs(ws, dataset)}
    if pair_id not in pairs:
        raise ConfigError(f"pair {pair_id!r} not in dataset")
    pair = pairs[pair_id]
    cfg = InversionConfig(steps=steps, seed=seed)
    if identity:
        result = invert_identity(bundle, pair.before, cfg)
    else:
        result = invert_conditional(bundle, pair.before, pair.after, cfg)
    out_dir = ws.reports / f"invert-{pair_id}{'-identity' if identity else ''}"
    out_dir.mkdir(parents=True, exist_ok=True)
    render = bundle.generate_from_w(pair.before, result.style.w)
    editops.save_image(render, out_dir / "render.png")
    write_json(
        {
            "pair_id": pair_id,
            "identity": identity,
            "init_error": result.init_error,
            "final_error": result.final_error,
            "checkpoint_hash": bundle.generator_hash(),
            "w": [float(x) for x in result.style.w],
        },
        out_dir / "result.json",
    )
    write_csv([{"step": i, "loss": v} for i, v in enumerate(result.trace)],
              out_dir / "trace.csv")
    click.echo(f"wrote {out_dir} (error {result.init_error:.2f} -> {result.final_error:.2f})")


@main.command()
@click.option("--checkpoint", required=True)
@click.option("--dataset", default=None, help="Source of the probe image (optional).")
@click.option("--directions", "n_directions", default=6, show_default=True)
@click.option("--strips", default=3, show_default=True, help="Directions to render.")
@click.option("--alphas", default="-6,-3,0,3,6", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--name", default="analysis", show_default=True)
@click.pass_context
@_guard
def analyze(ctx, checkpoint, dataset, n_directions, strips, alphas, seed, name):
    """Factor the style space and report per-layer sensitivity + strips."""
    ws = _workspace(ctx)
    bundle = GeneratorBundle.load(_resolve_checkpoint(ws, checkpoint))
    alphas = [float(a) for a in alphas.split(",")]
    res = bundle.config.resolution
    if dataset:
        pairs = _load_pairs(ws, dataset)
        probes = [p.before for p in pairs[:4]]
    else:
        probes = [editops.generate_base_image(np.random.default_rng(seed + i), res)
                  for i in range(4)]

    n_layers = bundle.config.n_style_layers
    basis = sefa_directions(bundle, range(n_layers), n_directions)
    out_dir = ws.reports / name
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savez(out_dir / "directions.npz", directions=basis.directions,
             eigenvalues=basis.eigenvalues)

    w0 = bundle.mean_w(n_samples=2000, seed=seed)
    for d in range(min(strips, n_directions)):
        images = traversal_strip(bundle, probes[0], w0, basis.directions[d], alphas)
        save_traversal_strip(images, alphas, out_dir / f"strip_d{d}.png",
                             title=f"direction {d} (eig {basis.eigenvalues[d]:.3g})")

    sens = layer_sensitivity(bundle, probes, perturb_scale=2.0, seed=seed)
    write_csv(
        [{"layer": i, "resolution": r, "score": s}
         for i, (r, s) in enumerate(zip(sens.resolutions, sens.scores))],
        out_dir / "sensitivity.csv",
    )
    write_json(
        {
            "checkpoint_hash": bundle.generator_hash(),
            "eigenvalues": [float(v) for v in basis.eigenvalues],
            "layer_scores": [float(s) for s in sens.scores],
            "layer_resolutions": sens.resolutions,
        },
        out_dir / "analysis.json",
    )
    click.echo(f"wrote {out_dir} ({min(strips, n_directions)} strips, {n_layers} layer scores)")


@main.command(name="index")
@click.option("--checkpoint", required=True)
@click.option("--dataset", required=True)
@click.option("--split", default="train", show_default=True)
@click.option("--steps", default=150, show_default=True)
@click.option("--limit", default=None, type=int, help="Cap the number of pairs.")
@click.option("--name", default=None, help="Index name (default the dataset name).")
@click.pass_context
@_guard
def index_cmd(ctx, checkpoint, dataset, split, steps, limit, name):
    """Invert a dataset split and store unit codes for search."""
    ws = _workspace(ctx)
    bundle = GeneratorBundle.load(_resolve_checkpoint(ws, checkpoint))
    pairs = [p for p in _load_pairs(ws, dataset) if split in ("all", p.split)]
    if limit:
        pairs = pairs[:limit]
    if not pairs:
        raise ConfigError(f"no pairs in split {split!r}")
    cfg = InversionConfig(steps=steps,
                          loss_resolution=bundle.config.resolution // 2)
    idx = build_index(bundle, pairs, cfg)
    name = name or Path(dataset).name
    path = save_index(idx, ws.indexes / f"{name}.jsonl")
    failures = len(idx.metadata["failures"])
    click.echo(f"wrote {path} ({len(idx)} codes, {failures} failures)")


@main.command()
@click.option("--index", "index_name", required=True)
@click.option("--pair-id", required=True)
@click.option("--k", default=5, show_default=True)
@click.pass_context
@_guard
def retrieve(ctx, index_name, pair_id, k):
    """Find the k nearest editing styles to an indexed pair."""
    ws = _workspace(ctx)
    idx = load_index(_resolve_index(ws, index_name))
    entry = idx.entries.get(pair_id)
    if entry is None:
        raise ConfigError(f"pair {pair_id!r} not in index")
    ranked = [r for r in knn_query(idx, entry.w_unit, min(k + 1, len(idx)))
              if r[0] != pair_id][:k]
    rows = [
        {"rank": i + 1, "id": rid, "similarity": f"{sim:.6f}",
         "tags": "|".join(idx.entries[rid].tags)}
        for i, (rid, sim) in enumerate(ranked)
    ]
    out_dir = ws.reports / f"retrieve-{pair_id}"
    write_csv(rows, out_dir / "results.csv")
    for row in rows:
        click.echo(f"{row['rank']:>3}  {row['id']}  {row['similarity']}  {row['tags']}")
    click.echo(f"wrote {out_dir / 'results.csv'}")


@main.command()
@click.option("--index", "index_name", required=True)
@click.option("--k", "ks", default="8", show_default=True,
              help="Comma-separated cluster counts; best purity is reported.")
@click.option("--seed", default=0, show_default=True)
@click.pass_context
@_guard
def cluster(ctx, index_name, ks, seed):
    """Cluster editing codes on the sphere and score tag purity."""
    ws = _workspace(ctx)
    idx = load_index(_resolve_index(ws, index_name))
    ids, _ = idx.matrix()
    tag_lists = [idx.entries[i].tags for i in ids]
    rng = np.random.default_rng(seed)
    best = None
    for k in [int(v) for v in ks.split(",")]:
        if k > len(idx):
            click.echo(f"skipping K={k}: index has only {len(idx)} codes", err=True)
            continue
        clustering = spherical_kmeans(idx, k, seed=seed)
        assignments = [clustering.assignments[i] for i in ids]
        purity = customized_purity(assignments, tag_lists, editops.TAG_VOCAB)
        random_purity = customized_purity(
            [int(rng.integers(k)) for _ in ids], tag_lists, editops.TAG_VOCAB
        )
        summary = summarize_clusters(idx, clustering)
        paths = save_cluster_report(summary, purity, random_purity,
                                    ws.reports / f"cluster-k{k}")
        click.echo(f"K={k}: purity {purity:.3f} (random {random_purity:.3f}) -> {paths['json']}")
        if best is None or purity > best[1]:
            best = (k, purity)
    if best is None:
        raise ConfigError("no usable K value")
    click.echo(f"best K={best[0]} purity {best[1]:.3f}")


@main.command(name="edit-text")
@click.option("--checkpoint", required=True)
@click.option("--embedder", "embedder_path", required=True,
              help="Embedder .pt; trained from --dataset when missing.")
@click.option("--dataset", default=None)
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--request", "request_text", required=True)
@click.option("--lam", default=0.3, show_default=True)
@click.option("--alpha", default=1.0, show_default=True)
@click.option("--mask", "mask_path", default=None, type=click.Path(exists=True))
@click.option("--steps", default=120, show_default=True)
@click.option("--identity-steps", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--name", default="edit-text", show_default=True)
@click.pass_context
@_guard
def edit_text(ctx, checkpoint, embedder_path, dataset, image_path, request_text,
              lam, alpha, mask_path, steps, identity_steps, seed, name):
    """Zero-shot text-guided edit of one image."""
    ws = _workspace(ctx)
    bundle = GeneratorBundle.load(_resolve_checkpoint(ws, checkpoint))
    embedder_file = _resolve_embedder(ws, embedder_path)
    if embedder_file.is_file():
        embedder = load_embedder(embedder_file)
    else:
        if not dataset:
            raise ConfigError(f"{embedder_file} missing; pass --dataset to train one")
        pairs = [p for p in _load_pairs(ws, dataset) if p.split == "train"]
        embedder = train_embedder(pairs, EmbedderConfig(seed=seed))
        embedder_file.parent.mkdir(parents=True, exist_ok=True)
        save_embedder(embedder, embedder_file)
        click.echo(f"trained embedder -> {embedder_file}")

    image = editops.load_image(image_path)
    mask = None
    if mask_path:
        mask = (editops.load_image(mask_path)[..., 0] > 0).astype(np.uint8)

    w0 = invert_identity(
        bundle, image,
        InversionConfig(steps=identity_steps, optimize_noise=False, seed=seed),
    ).style.w
    cfg = ZeroShotConfig(steps=steps, init="given", w_init=w0, seed=seed)
    result = zero_shot_edit(bundle, embedder, image, request_text, lam, mask, cfg)
    w_final = interpolate_codes(w0, result.w, alpha)
    out = bundle.generate_from_w(image, w_final)
    if mask is not None:
        out = np.where(mask[..., None] > 0, out, image)

    out_dir = ws.reports / name
    out_dir.mkdir(parents=True, exist_ok=True)
    editops.save_image(out, out_dir / "result.png")
    write_csv([{"step": i, "objective": v} for i, v in enumerate(result.trace)],
              out_dir / "trace.csv")
    write_json(
        {
            "request": request_text,
            "lambda": lam,
            "alpha": alpha,
            "objective": result.objective,
            "init_objective": result.init_objective,
            "checkpoint_hash": bundle.generator_hash(),
        },
        out_dir / "result.json",
    )
    click.echo(f"wrote {out_dir} (objective {result.init_objective:.4f} -> {result.objective:.4f})")


@main.command(name="edit-exemplar")
@click.option("--checkpoint", required=True)
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--before", "before_path", required=True, type=click.Path(exists=True))
@click.option("--after", "after_path", required=True, type=click.Path(exists=True))
@click.option("--alpha", default=1.0, show_default=True)
@click.option("--steps", default=250, show_default=True)
@click.option("--identity-steps", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--name", default="edit-exemplar", show_default=True)
@click.pass_context
@_guard
def edit_exemplar(ctx, checkpoint, image_path, before_path, after_path, alpha,
                  steps, identity_steps, seed, name):
    """Transfer the editing style of a before/after exemplar to a new image."""
    ws = _workspace(ctx)
    bundle = GeneratorBundle.load(_resolve_checkpoint(ws, checkpoint))
    image = editops.load_image(image_path)
    before = editops.load_image(before_path)
    after = editops.load_image(after_path)

    exemplar = invert_conditional(bundle, before, after,
                                  InversionConfig(steps=steps, seed=seed))
    w0 = invert_identity(
        bundle, image,
        InversionConfig(steps=identity_steps, optimize_noise=False, seed=seed),
    ).style.w
    w = interpolate_codes(w0, exemplar.style.w, alpha)
    out = bundle.generate_from_w(image, w)

    out_dir = ws.reports / name
    out_dir.mkdir(parents=True, exist_ok=True)
    editops.save_image(out, out_dir / "result.png")
    write_json(
        {
            "alpha": alpha,
            "exemplar_final_error": exemplar.final_error,
            "checkpoint_hash": bundle.generator_hash(),
        },
        out_dir / "result.json",
    )
    click.echo(f"wrote {out_dir} (exemplar error {exemplar.final_error:.2f})")


class _ConstantStyleControl:
    """Duck-typed bundle whose outputs ignore z: the no-multimodality control."""

    def __init__(self, bundle: GeneratorBundle):
        self._bundle = bundle
        self._w = bundle.mean_w(n_samples=2000, seed=0)
        self.config = bundle.config

    def generate(self, image, z):
        return self._bundle.generate_from_w(image, self._w)


@main.command(name="eval")
@click.option("--checkpoint", required=True)
@click.option("--dataset", required=True)
@click.option("--index", "index_name", default=None)
@click.option("--n-inversion", default=12, show_default=True)
@click.option("--n-fid", default=24, show_default=True)
@click.option("--steps", default=120, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--name", default="eval", show_default=True)
@click.pass_context
@_guard
def eval_cmd(ctx, checkpoint, dataset, index_name, n_inversion, n_fid, steps,
             seed, name):
    """Evaluate a checkpoint: inversion errors, diversity, FID-style score."""
    started = time.time()
    ws = _workspace(ctx)
    ckpt = _resolve_checkpoint(ws, checkpoint)
    bundle = GeneratorBundle.load(ckpt)
    pairs = _load_pairs(ws, dataset)
    val = [p for p in pairs if p.split == "val"]
    if len(val) < 4:  # tiny smoke datasets: fall back to everything
        val = pairs
    rng = np.random.default_rng(seed)
    extractor = FeatureExtractor(seed=seed)

    sample = val[:n_inversion]
    cfg = InversionConfig(steps=steps, seed=seed)
    results = invert_conditional_batch(
        bundle, [p.before for p in sample], [p.after for p in sample], cfg, extractor
    )
    identity_sample = val[: max(4, n_inversion // 3)]
    identity = invert_conditional_batch(
        bundle, [p.before for p in identity_sample],
        [p.before for p in identity_sample], cfg, extractor
    )

    div_inputs = [p.before for p in val[:6]]
    diversity = diversity_lpips(bundle, div_inputs, n_samples=6, seed=seed,
                                extractor=extractor)
    control = diversity_lpips(_ConstantStyleControl(bundle), div_inputs,
                              n_samples=6, seed=seed, extractor=extractor)

    fid_pairs = val[:n_fid]
    untrained = GeneratorBundle(bundle.config, seed=seed + 991).eval_mode()
    fake, fake_untrained = [], []
    for p in fid_pairs:
        z = rng.standard_normal(bundle.config.z_dim).astype(np.float32)
        fake.append(bundle.generate(p.before, z))
        fake_untrained.append(untrained.generate(p.before, z))
    real = pooled_features([p.after for p in fid_pairs], extractor)
    fid_trained = frechet_distance(real, pooled_features(fake, extractor))
    fid_untrained = frechet_distance(real, pooled_features(fake_untrained, extractor))

    report = {
        "checkpoint_hash": bundle.generator_hash(),
        "dataset": str(_resolve_dataset(ws, dataset)),
        "n_val_pairs": len(val),
        "inversion": {
            "mean_init_error": float(np.mean([r.init_error for r in results])),
            "mean_final_error": float(np.mean([r.final_error for r in results])),
            "mean_identity_error": float(np.mean([r.final_error for r in identity])),
        },
        "diversity": {
            "diversity_lpips": float(diversity),
            "constant_w_control": float(control),
        },
        "fid": {"trained": float(fid_trained), "untrained": float(fid_untrained)},
        "runtime_seconds": 0.0,
    }

    if index_name:
        idx = load_index(_resolve_index(ws, index_name))
        by_id = {p.id: p for p in pairs}
        families = {
            pid: by_id[pid].recipe.family_id
            for pid in idx.entries if pid in by_id and by_id[pid].recipe
        }
        queries = [pid for pid in sorted(families)][:40]
        hits, total = 0, 0
        for pid in queries:
            ranked = [r for r in knn_query(idx, idx.entries[pid].w_unit,
                                           min(6, len(idx))) if r[0] != pid][:5]
            hits += sum(1 for rid, _ in ranked if families.get(rid) == families[pid])
            total += len(ranked)
        report["retrieval"] = {
            "precision_at_5": hits / total if total else 0.0,
            "chance": 1.0 / len(editops.FAMILIES),
        }
        ids, _ = idx.matrix()
        tag_lists = [idx.entries[i].tags for i in ids]
        best = None
        for k in (8, 16, 32):
            if k > len(idx):
                continue
            clustering = spherical_kmeans(idx, k, seed=seed)
            purity = customized_purity(
                [clustering.assignments[i] for i in ids], tag_lists, editops.TAG_VOCAB
            )
            if best is None or purity > best[1]:
                best = (k, purity)
        if best:
            random_purity = customized_purity(
                [int(rng.integers(best[0])) for _ in ids], tag_lists, editops.TAG_VOCAB
            )
            report["clustering"] = {
                "k": best[0],
                "purity": float(best[1]),
                "random_purity": float(random_purity),
            }

    report["runtime_seconds"] = time.time() - started
    paths = save_eval_report(report, ws.reports / name)
    click.echo(
        f"wrote {paths['json']} (inversion {report['inversion']['mean_init_error']:.2f}"
        f" -> {report['inversion']['mean_final_error']:.2f},"
        f" diversity {diversity:.4f}, fid {fid_trained:.2f})"
    )


@main.command()
@click.option("--checkpoint", required=True)
@click.option("--index", "index_name", default=None)
@click.option("--embedder", "embedder_path", default=None)
@click.option("--dataset", default=None, help="Backs cluster thumbnails.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--identity-steps", default=120, show_default=True)
@click.option("--zero-shot-steps", default=80, show_default=True)
@click.pass_context
@_guard
def serve(ctx, checkpoint, index_name, embedder_path, dataset, host, port,
          identity_steps, zero_shot_steps):
    """Serve the editing API over HTTP."""
    import uvicorn

    from .service import ServiceState, create_app

    ws = _workspace(ctx)
    bundle = GeneratorBundle.load(_resolve_checkpoint(ws, checkpoint))
    idx = load_index(_resolve_index(ws, index_name)) if index_name else None
    embedder = load_embedder(_resolve_embedder(ws, embedder_path)) if embedder_path else None
    pairs = {}
    if dataset:
        pairs = {p.id: p for p in _load_pairs(ws, dataset)}
    state = ServiceState(
        bundle=bundle, index=idx, embedder=embedder, pairs=pairs, workspace=ws,
        identity_steps=identity_steps, zero_shot_steps=zero_shot_steps,
    )
    app = create_app(state)
    click.echo(f"serving on http://{host}:{port} (checkpoint {state.checkpoint_hash[:12]})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def run_command(argv: list[str]) -> int:
    """Programmatic entry point returning the process exit code."""
    try:
        main(args=list(argv), prog_name="spacedit", standalone_mode=True)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    return 0


if __name__ == "__main__":
    main()
