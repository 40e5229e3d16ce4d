import numpy as np
import pytest
import torch
import torch.nn.functional as F

from spacedit.generator import (
    GeneratorBundle,
    GeneratorConfig,
    StyleCode,
    modulated_conv,
)
from oracles import modulated_conv_ref


@pytest.fixture(scope="module")
def tiny_bundle():
    cfg = GeneratorConfig(resolution=16, base_channels=8, max_channels=64)
    return GeneratorBundle(cfg, seed=1).eval_mode()


def _img(rng, res):
    return rng.uniform(0, 1, size=(res, res, 3)).astype(np.float32)


def test_style_layer_count_formula():
    assert GeneratorConfig(resolution=256).n_style_layers == 14
    assert GeneratorConfig(resolution=64).n_style_layers == 10
    assert GeneratorConfig(resolution=32).n_style_layers == 8
    assert GeneratorConfig(resolution=8).n_style_layers == 4


def test_config_rejects_bad_resolution():
    with pytest.raises(ValueError):
        GeneratorConfig(resolution=24)
    with pytest.raises(ValueError):
        GeneratorConfig(resolution=4)


def test_channel_schedule_doubles_to_cap():
    cfg = GeneratorConfig(resolution=64, base_channels=16, max_channels=128)
    schedule = cfg.channel_schedule()
    # independent restatement: double per halving, cap at max
    want = {}
    ch = 16
    res = 64
    while res >= 4:
        want[res] = min(ch, 128)
        ch *= 2
        res //= 2
    assert schedule == want


def test_encode_pyramid_keys_and_widths():
    cfg = GeneratorConfig(resolution=64, base_channels=8, max_channels=64)
    bundle = GeneratorBundle(cfg, seed=0)
    rng = np.random.default_rng(0)
    pyramid = bundle.encode_image(_img(rng, 64))
    assert set(pyramid) == {4, 8, 16, 32}
    for res, feat in pyramid.items():
        assert feat.shape == (cfg.channels(res), res, res)


def test_encode_rejects_wrong_resolution(tiny_bundle):
    rng = np.random.default_rng(1)
    with pytest.raises(ValueError):
        tiny_bundle.encode_image(_img(rng, 32))


def test_encode_deterministic(tiny_bundle):
    rng = np.random.default_rng(2)
    img = _img(rng, 16)
    p1 = tiny_bundle.encode_image(img)
    p2 = tiny_bundle.encode_image(img)
    for res in p1:
        assert np.array_equal(p1[res], p2[res])


def test_modulated_conv_plain_when_style_ones():
    torch.manual_seed(0)
    x = torch.randn(2, 3, 5, 5)
    w = torch.randn(4, 3, 3, 3)
    style = torch.ones(2, 3)
    out = modulated_conv(x, w, style, demodulate=False)
    want = F.conv2d(x, w, padding=1)
    assert torch.allclose(out, want, atol=1e-6)


def test_modulated_conv_scalar_case():
    x = torch.full((1, 1, 3, 3), 2.0)
    w = torch.full((1, 1, 1, 1), 3.0)
    style = torch.full((1, 1), 5.0)
    out = modulated_conv(x, w, style, demodulate=False)
    assert torch.allclose(out, torch.full((1, 1, 3, 3), 30.0))


def test_modulated_conv_matches_materialized_oracle():
    rng = np.random.default_rng(3)
    for demod in (False, True):
        x = rng.normal(size=(2, 3, 4, 4)).astype(np.float32)
        w = rng.normal(size=(5, 3, 3, 3)).astype(np.float32)
        style = rng.uniform(0.5, 1.5, size=(2, 3)).astype(np.float32)
        got = modulated_conv(torch.from_numpy(x), torch.from_numpy(w),
                             torch.from_numpy(style), demodulate=demod).numpy()
        want = modulated_conv_ref(x, w, style, demod)
        assert np.abs(got - want).max() < 1e-5


def test_modulated_conv_shape_mismatch():
    with pytest.raises(ValueError):
        modulated_conv(torch.zeros(1, 3, 4, 4), torch.zeros(2, 3, 3, 3), torch.zeros(1, 2))


def test_map_latent_determinism_and_scale_invariance(tiny_bundle):
    rng = np.random.default_rng(4)
    z = rng.normal(size=512).astype(np.float32)
    w1 = tiny_bundle.map_latent(z)
    assert w1.shape == (512,) and np.all(np.isfinite(w1))
    assert np.array_equal(w1, tiny_bundle.map_latent(z))
    # exactly representable scalings give bit-identical w
    for alpha in (2.0, 0.5, 4.0):
        assert np.array_equal(w1, tiny_bundle.map_latent(alpha * z))
    # arbitrary positive scalings agree to float precision
    assert np.allclose(w1, tiny_bundle.map_latent(np.float32(np.pi) * z), atol=1e-5)


def test_map_latent_rejects_zero(tiny_bundle):
    with pytest.raises(ValueError):
        tiny_bundle.map_latent(np.zeros(512, dtype=np.float32))


def test_generate_deterministic_and_in_range(tiny_bundle):
    rng = np.random.default_rng(5)
    img = _img(rng, 16)
    z = rng.normal(size=512).astype(np.float32)
    out1 = tiny_bundle.generate(img, z)
    out2 = tiny_bundle.generate(img, z)
    assert np.array_equal(out1, out2)
    assert out1.shape == (16, 16, 3)
    assert np.all(out1 >= 0) and np.all(out1 <= 1) and np.all(np.isfinite(out1))


def test_per_layer_override_equals_broadcast(tiny_bundle):
    rng = np.random.default_rng(6)
    img = _img(rng, 16)
    w = tiny_bundle.map_latent(rng.normal(size=512).astype(np.float32))
    n = tiny_bundle.config.n_style_layers
    broadcast = tiny_bundle.generate(img, StyleCode(w=w))
    per_layer = tiny_bundle.generate(img, StyleCode(w=w, per_layer=[w.copy() for _ in range(n)]))
    assert np.array_equal(broadcast, per_layer)


def test_style_code_validation(tiny_bundle):
    rng = np.random.default_rng(7)
    img = _img(rng, 16)
    w = rng.normal(size=512).astype(np.float32)
    with pytest.raises(ValueError):
        tiny_bundle.generate(img, StyleCode(w=w, per_layer=[w] * 3))
    with pytest.raises(ValueError):
        tiny_bundle.generate(img, StyleCode(w=w, noise=[np.zeros((4, 4))]))


def test_noise_resolutions_match_decoder(tiny_bundle):
    cfg = tiny_bundle.config
    res = cfg.noise_resolutions()
    assert len(res) == cfg.n_style_layers - 1
    assert res == [4, 8, 8, 16, 16]
    rng = np.random.default_rng(8)
    w = rng.normal(size=512).astype(np.float32)
    noise = [rng.normal(size=(r, r)).astype(np.float32) for r in res]
    out = tiny_bundle.generate(_img(rng, 16), StyleCode(w=w, noise=noise))
    assert np.all(np.isfinite(out))


def test_discriminator_scalar_and_deterministic(tiny_bundle):
    rng = np.random.default_rng(9)
    a, b = _img(rng, 16), _img(rng, 16)
    s1 = tiny_bundle.discriminate(a, b)
    s2 = tiny_bundle.discriminate(a, b)
    assert isinstance(s1, float) and np.isfinite(s1)
    assert s1 == s2


def test_discriminator_gradient_matches_finite_differences():
    cfg = GeneratorConfig(resolution=8, base_channels=4, max_channels=16)
    bundle = GeneratorBundle(cfg, seed=3).eval_mode()
    disc = bundle.discriminator.double()
    rng = np.random.default_rng(10)
    a = torch.tensor(rng.uniform(0.2, 0.8, size=(1, 3, 8, 8)))
    b = torch.tensor(rng.uniform(0.2, 0.8, size=(1, 3, 8, 8)), requires_grad=True)
    score = disc(a, b)[0]
    score.backward()
    eps = 1e-6
    for y, x in [(0, 0), (3, 4), (7, 7), (2, 6)]:
        for sign_channel in (0, 2):
            with torch.no_grad():
                bp = b.clone()
                bp[0, sign_channel, y, x] += eps
                bm = b.clone()
                bm[0, sign_channel, y, x] -= eps
                fd = (disc(a, bp)[0] - disc(a, bm)[0]) / (2 * eps)
            an = b.grad[0, sign_channel, y, x]
            assert abs(float(fd - an)) <= 1e-3 * max(1.0, abs(float(an)))


def test_generator_gradcheck_smoke():
    # a fuller parameter sweep runs in the acceptance suite
    cfg = GeneratorConfig(resolution=8, base_channels=4, max_channels=16)
    bundle = GeneratorBundle(cfg, seed=4)
    for m in bundle.generator_modules():
        m.double()
    rng = np.random.default_rng(11)
    img = torch.tensor(rng.uniform(0.1, 0.9, size=(1, 3, 8, 8)))
    z = torch.tensor(rng.normal(size=(1, 512)))

    def loss_fn():
        w = bundle.mapping(z)
        return bundle.generate_t(img, w).sum()

    loss = loss_fn()
    params = [p for p in bundle.generator_parameters() if p.requires_grad]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    checked = 0
    gen = np.random.default_rng(12)
    for p, g in zip(params, grads):
        if g is None or checked >= 8:
            continue
        idx = tuple(gen.integers(0, s) for s in p.shape)
        eps = 1e-6 * max(1.0, abs(float(p.data[idx])))
        with torch.no_grad():
            orig = float(p.data[idx])
            p.data[idx] = orig + eps
            up = float(loss_fn())
            p.data[idx] = orig - eps
            down = float(loss_fn())
            p.data[idx] = orig
        fd = (up - down) / (2 * eps)
        an = float(g[idx])
        assert abs(fd - an) <= 1e-3 * max(1.0, abs(an)), (fd, an)
        checked += 1
    assert checked >= 5


def test_checkpoint_round_trip_bit_exact(tiny_bundle, tmp_path):
    rng = np.random.default_rng(13)
    img = _img(rng, 16)
    z = rng.normal(size=512).astype(np.float32)
    before = tiny_bundle.generate(img, z)
    path = tmp_path / "ckpt.pt"
    tiny_bundle.meta["steps"] = 42
    tiny_bundle.save(path)
    loaded = GeneratorBundle.load(path).eval_mode()
    assert np.array_equal(loaded.generate(img, z), before)
    assert loaded.meta["steps"] == 42
    assert loaded.generator_hash() == tiny_bundle.generator_hash()


def test_checkpoint_version_required(tmp_path):
    path = tmp_path / "bad.pt"
    torch.save({"config": {}}, path)
    with pytest.raises(ValueError):
        GeneratorBundle.load(path)


def test_mean_w_deterministic(tiny_bundle):
    m1 = tiny_bundle.mean_w(n_samples=200, seed=5)
    m2 = tiny_bundle.mean_w(n_samples=200, seed=5)
    assert np.array_equal(m1, m2)
    assert m1.shape == (512,)


def test_comod_and_shallow_flags_run():
    for flags in ({"comod": True}, {"shallow": True}):
        cfg = GeneratorConfig(resolution=16, base_channels=8, max_channels=32, **flags)
        bundle = GeneratorBundle(cfg, seed=6).eval_mode()
        rng = np.random.default_rng(14)
        out = bundle.generate(_img(rng, 16), rng.normal(size=512).astype(np.float32))
        assert np.all(np.isfinite(out))
