"""Session fixtures for the heavy shared artifacts.

The trained toy generator, its caption embedder, and the style index take
minutes to hours to build, so they are cached on disk under tests/.cache
(see toytrain.py) and rebuilt only when their inputs change.
"""
import pytest

import toytrain
from spacedit.editops import synthesize_dataset
from spacedit.inversion import InversionConfig
from spacedit.lgie import EmbedderConfig, load_embedder, save_embedder, train_embedder
from spacedit.spacesearch import build_index, load_index, save_index

RETRIEVAL_N = 200  # 8 families x 25 pairs, held out from training by seed
RETRIEVAL_SEED = 77


@pytest.fixture(scope="session")
def toy_bundle():
    return toytrain.ensure_trained()


@pytest.fixture(scope="session")
def toy_pairs():
    return toytrain.canonical_dataset()


@pytest.fixture(scope="session")
def toy_embedder(toy_pairs):
    path = toytrain.cache_dir() / "embedder.pt"
    if path.exists():
        return load_embedder(path)
    train_split = [p for p in toy_pairs if p.split == "train"]
    embedder = train_embedder(train_split, EmbedderConfig(steps=600, seed=0))
    save_embedder(embedder, path)
    return embedder


@pytest.fixture(scope="session")
def retrieval_pairs():
    return synthesize_dataset(RETRIEVAL_N, seed=RETRIEVAL_SEED,
                              resolution=toytrain.RESOLUTION)


@pytest.fixture(scope="session")
def toy_index(toy_bundle, retrieval_pairs):
    path = toytrain.cache_dir() / f"index-{RETRIEVAL_SEED}-{RETRIEVAL_N}.jsonl"
    cfg = InversionConfig(steps=150,
                          loss_resolution=toytrain.RESOLUTION // 2)
    if path.exists():
        index = load_index(path)
        fresh = {
            "bundle_hash": toy_bundle.generator_hash(),
            "steps": cfg.steps,
            "inversion_resolution": cfg.loss_resolution,
            "lambda_w": cfg.lambda_w,
        }
        if all(index.metadata.get(k) == v for k, v in fresh.items()):
            return index
    index = build_index(toy_bundle, retrieval_pairs, cfg)
    save_index(index, path)
    return index
