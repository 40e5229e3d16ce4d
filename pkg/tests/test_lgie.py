import dataclasses

import numpy as np
import pytest
import torch

from spacedit.editops import synthesize_dataset
from spacedit.generator import GeneratorBundle, GeneratorConfig
from spacedit.lgie import (
    EmbedderConfig,
    MapperConfig,
    ZeroShotConfig,
    build_vocab,
    embedder_retrieval_accuracy,
    predict_code,
    tokenize,
    train_embedder,
    train_mapper,
    zero_shot_edit,
)

RES = 16


@pytest.fixture(scope="module")
def pairs():
    return synthesize_dataset(n_pairs=640, seed=21, resolution=RES)


@pytest.fixture(scope="module")
def bundle():
    cfg = GeneratorConfig(resolution=RES, base_channels=8, max_channels=64)
    return GeneratorBundle(cfg, seed=3).eval_mode()


@pytest.fixture(scope="module")
def embedder(pairs):
    train = [p for p in pairs if p.split == "train"]
    cfg = EmbedderConfig(steps=250, batch_size=32, seed=0)
    return train_embedder(train, cfg)


def test_tokenize_and_vocab():
    assert tokenize("Slightly increase the brightness, and warm it.") == [
        "slightly", "increase", "the", "brightness", "and", "warm", "it",
    ]
    vocab = build_vocab(["warm it", "cool it"])
    assert vocab["<unk>"] == 0
    assert set(vocab) == {"<unk>", "warm", "cool", "it"}


def test_train_embedder_requires_500_pairs(pairs):
    with pytest.raises(ValueError, match="500"):
        train_embedder(pairs[:100])


def test_train_embedder_rejects_empty_captions(pairs):
    broken = list(pairs[:499])
    bad = pairs[499]
    broken.append(
        dataclasses.replace(bad, recipe=dataclasses.replace(bad.recipe, caption=""))
    )
    with pytest.raises(ValueError, match="caption"):
        train_embedder(broken, EmbedderConfig(steps=1))


def test_embeddings_unit_norm_and_cosine_bounded(embedder, pairs):
    img = embedder.embed_image(pairs[0].after, pairs[0].before)
    txt = embedder.embed_text(pairs[0].recipe.caption)
    assert img.shape == (128,)
    assert txt.shape == (128,)
    assert np.linalg.norm(img) == pytest.approx(1.0, abs=1e-5)
    assert np.linalg.norm(txt) == pytest.approx(1.0, abs=1e-5)
    cos = float(img @ txt)
    assert -1.0 - 1e-6 <= cos <= 1.0 + 1e-6


def test_embedder_deterministic_given_seed(pairs):
    train = [p for p in pairs if p.split == "train"][:500]
    cfg = EmbedderConfig(steps=8, seed=5)
    a = train_embedder(train, cfg)
    b = train_embedder(train, cfg)
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb
        assert torch.equal(va, vb)


def test_embedder_heldout_retrieval_beats_chance(embedder, pairs):
    held_out = [p for p in pairs if p.split != "train"]
    assert len(held_out) >= 50
    acc = embedder_retrieval_accuracy(embedder, held_out, batch_size=16, seed=1)
    # chance within a batch of 16 is 1/16
    assert acc > 2.0 / 16.0, f"retrieval accuracy {acc:.3f} not above chance"


def test_predict_code_shape_determinism_and_empty_text(pairs, bundle):
    train = pairs[:60]
    mapper = train_mapper(train, bundle, MapperConfig(steps=5, batch_size=8))
    w1 = predict_code(mapper, train[0].before, "make it warmer")
    w2 = predict_code(mapper, train[0].before, "make it warmer")
    assert w1.shape == (512,)
    assert np.array_equal(w1, w2)
    with pytest.raises(ValueError, match="empty text"):
        predict_code(mapper, train[0].before, "")
    with pytest.raises(ValueError, match="empty text"):
        predict_code(mapper, train[0].before, "   ,,, ")


def test_mapper_training_freezes_generator_and_loss_decreases(pairs, bundle):
    hash_before = bundle.generator_hash()
    mapper = train_mapper(pairs[:80], bundle, MapperConfig(steps=100, batch_size=8, seed=2))
    assert bundle.generator_hash() == hash_before
    trace = mapper.train_trace
    assert len(trace) == 100
    assert np.mean(trace[-10:]) < np.mean(trace[:10])
    # generator grads stay enabled for later users
    assert all(p.requires_grad for p in bundle.generator_parameters())


def test_mapper_resolution_mismatch(bundle):
    wrong = synthesize_dataset(n_pairs=10, seed=4, resolution=32)
    with pytest.raises(ValueError, match="resolution"):
        train_mapper(wrong, bundle, MapperConfig(steps=1))


def test_no_visual_variant_ignores_the_image(pairs, bundle):
    mapper = train_mapper(
        pairs[:40], bundle, MapperConfig(steps=3, batch_size=8, no_visual=True)
    )
    w_a = predict_code(mapper, pairs[0].before, "brighten strongly")
    w_b = predict_code(mapper, pairs[1].before, "brighten strongly")
    assert np.allclose(w_a, w_b, atol=1e-6)

    visual = train_mapper(pairs[:40], bundle, MapperConfig(steps=3, batch_size=8))
    v_a = predict_code(visual, pairs[0].before, "brighten strongly")
    v_b = predict_code(visual, pairs[1].before, "brighten strongly")
    assert not np.allclose(v_a, v_b, atol=1e-6)


def test_zero_shot_mask_background_bit_exact(embedder, bundle, pairs):
    image = pairs[3].before
    rng = np.random.default_rng(6)
    mask = (rng.uniform(size=(RES, RES)) > 0.5).astype(np.uint8)
    cfg = ZeroShotConfig(steps=3, mean_w_samples=32)
    result = zero_shot_edit(bundle, embedder, image, "make it brighter", 0.3, mask, cfg)
    background = mask == 0
    assert np.array_equal(result.image[background], image[background])
    assert result.image.shape == image.shape


def test_zero_shot_best_iterate_never_worse_than_init(embedder, bundle, pairs):
    cfg = ZeroShotConfig(steps=6, mean_w_samples=32)
    result = zero_shot_edit(bundle, embedder, pairs[5].before, "add warmth", 0.2, None, cfg)
    assert result.objective <= result.init_objective + 1e-9
    assert len(result.trace) == 7
    assert result.w.shape == (512,)


def test_zero_shot_lambda_sweep_returns_all_candidates(embedder, bundle, pairs):
    cfg = ZeroShotConfig(steps=2, mean_w_samples=32)
    results = zero_shot_edit(
        bundle, embedder, pairs[7].before, "cool it down", (0.1, 0.3, 0.5), None, cfg
    )
    assert [r.lam for r in results] == [0.1, 0.3, 0.5]
    assert all(np.isfinite(r.objective) for r in results)
    best = min(results, key=lambda r: r.objective)
    assert any(best is r for r in results)


def test_zero_shot_input_validation(embedder, bundle, pairs):
    cfg = ZeroShotConfig(steps=1, mean_w_samples=16)
    with pytest.raises(ValueError, match="empty text"):
        zero_shot_edit(bundle, embedder, pairs[0].before, "", 0.3, None, cfg)
    bad_mask = np.ones((RES + 2, RES), dtype=np.uint8)
    with pytest.raises(ValueError, match="mask"):
        zero_shot_edit(bundle, embedder, pairs[0].before, "brighter", 0.3, bad_mask, cfg)
    small = np.zeros((8, 8, 3), dtype=np.float32)
    with pytest.raises(ValueError, match="resolution"):
        zero_shot_edit(bundle, embedder, small, "brighter", 0.3, None, cfg)


def test_zero_shot_config_validation():
    with pytest.raises(ValueError):
        ZeroShotConfig(init="nope")
    with pytest.raises(ValueError):
        ZeroShotConfig(init="given")
    cfg = ZeroShotConfig(init="given", w_init=np.zeros(512, dtype=np.float32))
    assert cfg.w_init is not None
