"""Loss term identities, hand values, invariances, and gradient checks."""

import numpy as np
import pytest

from styleshift import autograd as ag
from styleshift.autograd import Tensor
from styleshift.backbone import FeatureBackbone, toy_backbone
from styleshift.dihedral import ALL_TRANSFORMS, IDENTITY, DihedralTransform
from styleshift.errors import ConfigError, ContractError, ShapeError
from styleshift.losses import (BatchSample, LossWeights, content_loss,
                               extract_features, feature_statistics,
                               geometric_loss, psnr, reconstruction_loss,
                               style_loss, style_loss_from_stats, total_loss)
from styleshift.network import NetworkConfig, Stylizer

TINY = NetworkConfig(encoder_channels=(4, 6, 8), sab_count=2, mlp_hidden=6, style_dim=8)


def pixel_backbone():
    """Tap equals the raw pixels: identity 1x1 conv, zero mean, unit std."""
    eye = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
    weights = {"conv1.w": Tensor(eye), "conv1.b": Tensor(np.zeros(3, dtype=np.float32))}
    return FeatureBackbone(
        label="pixels", layers=(("conv", "conv1", 3, 3, 1), ("relu", "relu1")),
        weights=weights, taps_content=frozenset({"relu1"}),
        taps_style=frozenset({"relu1"}), mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))


def single_filter_backbone():
    """One 1x1 filter that reads the red channel."""
    w = np.zeros((1, 3, 1, 1), dtype=np.float32)
    w[0, 0] = 1.0
    weights = {"conv1.w": Tensor(w), "conv1.b": Tensor(np.zeros(1, dtype=np.float32))}
    return FeatureBackbone(
        label="red", layers=(("conv", "conv1", 3, 1, 1), ("relu", "relu1")),
        weights=weights, taps_content=frozenset({"relu1"}),
        taps_style=frozenset({"relu1"}), mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))


def rand_image(rng, size=8):
    return rng.uniform(0.05, 0.95, (3, size, size)).astype(np.float32)


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

def test_identical_images_identical_features():
    bb = toy_backbone()
    rng = np.random.default_rng(0)
    img = rand_image(rng, 16)
    fa = extract_features(Tensor(img), bb, bb.taps_style)
    fb = extract_features(Tensor(img.copy()), bb, bb.taps_style)
    for layer in fa:
        assert fa[layer].data.tobytes() == fb[layer].data.tobytes()


def test_single_filter_backbone_closed_form():
    bb = single_filter_backbone()
    img = np.zeros((3, 2, 2), dtype=np.float32)
    img[0] = [[0.1, 0.2], [0.3, 0.4]]
    feats = extract_features(Tensor(img), bb, {"relu1"})
    np.testing.assert_allclose(feats["relu1"].data[0], img[0], atol=1e-7)


def test_missing_tap_rejected():
    bb = toy_backbone()
    with pytest.raises(ConfigError):
        extract_features(Tensor(np.zeros((3, 8, 8), dtype=np.float32)), bb, {"relu9"})


def test_feature_gradient_reaches_image_not_backbone():
    bb = toy_backbone()
    rng = np.random.default_rng(1)
    img = ag.Parameter(rng.uniform(0.1, 0.9, (3, 8, 8)), "img")
    feats = extract_features(img, bb, {"relu3"})
    ag.backward(ag.sum_(feats["relu3"]))
    assert np.any(img.grad != 0)
    for t in bb.weights.values():
        assert t.grad is None and not t.requires_grad


def test_feature_gradient_matches_finite_differences():
    bb = toy_backbone(dtype=np.float64)
    rng = np.random.default_rng(2)
    img = ag.Parameter(rng.uniform(0.1, 0.9, (3, 8, 8)), "img")

    def loss_value():
        feats = extract_features(img, bb, {"relu3"})
        return ag.sum_(ag.mul(feats["relu3"], feats["relu3"]))

    ag.backward(loss_value())
    analytic = img.grad.copy()
    h = 1e-6
    flat = img.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(0, flat.size, 7):  # sample every 7th pixel to keep it quick
        keep = flat[i]
        flat[i] = keep + h
        up = loss_value().item()
        flat[i] = keep - h
        dn = loss_value().item()
        flat[i] = keep
        numeric[i] = (up - dn) / (2 * h)
    idx = np.arange(0, flat.size, 7)
    np.testing.assert_allclose(analytic.reshape(-1)[idx], numeric[idx], rtol=1e-4, atol=1e-7)


# ---------------------------------------------------------------------------
# content / style / reconstruction
# ---------------------------------------------------------------------------

def test_content_loss_zero_on_identity():
    bb = toy_backbone()
    rng = np.random.default_rng(3)
    img = rand_image(rng, 16)
    assert content_loss(Tensor(img), Tensor(img.copy()), bb).item() == 0.0


def test_content_loss_single_feature_hand_value():
    bb = single_filter_backbone()
    a = np.zeros((3, 1, 1), dtype=np.float32)
    b = np.zeros((3, 1, 1), dtype=np.float32)
    a[0, 0, 0] = 3.0
    b[0, 0, 0] = 5.0
    assert content_loss(Tensor(a), Tensor(b), bb).item() == pytest.approx(2.0, abs=1e-6)


def test_content_loss_matches_direct_recomputation():
    bb = toy_backbone()
    rng = np.random.default_rng(4)
    a, b = rand_image(rng, 16), rand_image(rng, 16)
    got = content_loss(Tensor(a), Tensor(b), bb).item()
    want = 0.0
    for layer in sorted(bb.taps_content):
        fa = extract_features(Tensor(a), bb, {layer})[layer].data
        fb = extract_features(Tensor(b), bb, {layer})[layer].data
        want += np.sqrt(((fa - fb) ** 2).sum())
    assert got == pytest.approx(want, rel=1e-5)


def test_style_loss_zero_on_identity():
    bb = toy_backbone()
    rng = np.random.default_rng(5)
    img = rand_image(rng, 16)
    assert style_loss(Tensor(img), Tensor(img.copy()), bb).item() == pytest.approx(0.0, abs=1e-6)


def test_style_loss_invariant_to_spatial_permutation():
    bb = pixel_backbone()
    rng = np.random.default_rng(6)
    img = rand_image(rng, 8)
    perm = rng.permutation(64)
    shuffled = img.reshape(3, -1)[:, perm].reshape(3, 8, 8).copy()
    assert style_loss(Tensor(img), Tensor(shuffled), bb).item() == pytest.approx(0.0, abs=1e-5)
    assert style_loss(Tensor(shuffled), Tensor(img), bb).item() == pytest.approx(0.0, abs=1e-5)


def test_style_loss_hand_computed_statistics():
    bb = pixel_backbone()
    a = np.zeros((3, 2, 2), dtype=np.float32)
    b = np.zeros((3, 2, 2), dtype=np.float32)
    a[0] = [[1.0, 1.0], [3.0, 3.0]]     # mean 2, std 1
    b[0] = [[4.0, 4.0], [8.0, 8.0]]     # mean 6, std 2
    got = style_loss(Tensor(a), Tensor(b), bb).item()
    # channel 0 contributes |2-6| to the mean term and |1-2| to the std term
    assert got == pytest.approx(5.0, abs=1e-4)


def test_style_loss_allows_different_sizes():
    bb = toy_backbone()
    rng = np.random.default_rng(7)
    val = style_loss(Tensor(rand_image(rng, 16)), Tensor(rand_image(rng, 32)), bb).item()
    assert np.isfinite(val) and val >= 0


def test_reconstruction_loss_values():
    rng = np.random.default_rng(8)
    img = rand_image(rng, 4)
    assert reconstruction_loss(Tensor(img), Tensor(img.copy())).item() == 0.0
    zeros = Tensor(np.zeros((3, 2, 2), dtype=np.float32))
    ones = Tensor(np.ones((3, 2, 2), dtype=np.float32))
    assert reconstruction_loss(zeros, ones).item() == pytest.approx(np.sqrt(12.0), abs=1e-6)
    a, b = rand_image(rng, 4), rand_image(rng, 4)
    want = float(np.sqrt(((a - b) ** 2).sum()))
    assert reconstruction_loss(Tensor(a), Tensor(b)).item() == pytest.approx(want, rel=1e-6)


def test_reconstruction_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        reconstruction_loss(Tensor(np.zeros((3, 4, 4), dtype=np.float32)),
                            Tensor(np.zeros((3, 8, 8), dtype=np.float32)))


# ---------------------------------------------------------------------------
# geometric loss
# ---------------------------------------------------------------------------

def test_geometric_identity_transform_is_zero():
    model = Stylizer.initialize(TINY, seed=1)
    rng = np.random.default_rng(9)
    c = Tensor(rand_image(rng, 8))
    f = Tensor(np.ones(8, dtype=np.float32))
    assert geometric_loss(c, f, model, (IDENTITY,)).item() == 0.0


def test_geometric_loss_pointwise_config_near_zero():
    cfg = NetworkConfig(encoder_channels=(4, 6, 8), sab_count=2, sconv_kernel=(1, 1),
                        mlp_hidden=6, style_dim=8, io_kernel=1, mid_kernel=1,
                        downsample="pool")
    model = Stylizer.initialize(cfg, seed=2)
    rng = np.random.default_rng(10)
    c = Tensor(rand_image(rng, 16))
    f = Tensor(rng.uniform(-1, 1, 8).astype(np.float32))
    assert geometric_loss(c, f, model, ALL_TRANSFORMS).item() < 1e-5


def test_geometric_loss_flip_matches_composition_oracle():
    model = Stylizer.initialize(TINY, seed=3)
    rng = np.random.default_rng(11)
    img = rand_image(rng, 8)
    values = rng.uniform(-1, 1, 8).astype(np.float32)
    flip = DihedralTransform(4)
    got = geometric_loss(Tensor(img), Tensor(values), model, (flip,)).item()
    s_c = model.stylize_array(img, values)
    s_fc = model.stylize_array(np.ascontiguousarray(np.flip(img, axis=-1)), values)
    want = (np.abs(s_c - np.flip(s_fc, axis=-1)).mean()
            + np.abs(s_fc - np.flip(s_c, axis=-1)).mean())
    assert got == pytest.approx(float(want), rel=1e-5)


def test_geometric_loss_rejects_nonsquare_rotation():
    model = Stylizer.initialize(TINY, seed=3)
    c = Tensor(np.zeros((3, 8, 12), dtype=np.float32))
    f = Tensor(np.ones(8, dtype=np.float32))
    with pytest.raises(ShapeError):
        geometric_loss(c, f, model, (DihedralTransform(1),))
    # shape-preserving subset is fine on non-square inputs
    val = geometric_loss(c, f, model, (DihedralTransform(4),)).item()
    assert np.isfinite(val)


# ---------------------------------------------------------------------------
# total loss
# ---------------------------------------------------------------------------

def make_batch(model, bb, rng, n=2):
    styles = [rng.uniform(-1, 1, 8).astype(np.float32) for _ in range(n)]
    samples = []
    for i in range(n):
        style_img = rand_image(rng, 16)
        samples.append(BatchSample(
            content=rand_image(rng, 8),
            style_id=f"s{i}",
            style_rep=Tensor(styles[i]),
            style_stats=feature_statistics(bb, style_img),
            geo_transforms=(DihedralTransform(4),),
        ))
    return samples


def test_total_loss_zero_weights():
    model = Stylizer.initialize(TINY, seed=4)
    bb = toy_backbone()
    rng = np.random.default_rng(12)
    samples = make_batch(model, bb, rng)
    f0 = Tensor(np.ones(8, dtype=np.float32))
    total, comps = total_loss(samples, f0, model, bb,
                              LossWeights(0.0, 0.0, 0.0, 0.0))
    assert total.item() == 0.0
    assert comps["total"] == 0.0


def test_total_loss_content_only_matches_content_loss():
    model = Stylizer.initialize(TINY, seed=5)
    bb = toy_backbone()
    rng = np.random.default_rng(13)
    samples = make_batch(model, bb, rng, n=1)
    f0 = Tensor(np.ones(8, dtype=np.float32))
    total, _ = total_loss(samples, f0, model, bb, LossWeights(1.0, 0.0, 0.0, 0.0))
    stylized = model.forward(Tensor(samples[0].content), samples[0].style_rep)
    want = content_loss(stylized, Tensor(samples[0].content), bb).item()
    assert total.item() == pytest.approx(want, rel=1e-6)


def test_total_loss_equals_sum_of_terms():
    model = Stylizer.initialize(TINY, seed=6)
    bb = toy_backbone()
    rng = np.random.default_rng(14)
    samples = make_batch(model, bb, rng)
    f0 = Tensor(np.ones(8, dtype=np.float32))
    w = LossWeights()
    total, comps = total_loss(samples, f0, model, bb, w)
    want = (w.content * comps["content"] + w.style * comps["style"]
            + w.reconstruction * comps["reconstruction"] + w.geometric * comps["geometric"])
    assert total.item() == pytest.approx(want, rel=1e-5)
    # and each component agrees with an independent evaluation
    by_hand = {"content": 0.0, "style": 0.0, "reconstruction": 0.0, "geometric": 0.0}
    f0_blocks = model.adapted_params(f0)
    for s in samples:
        c = Tensor(s.content)
        stylized = model.forward(c, s.style_rep)
        by_hand["content"] += content_loss(stylized, c, bb).item()
        by_hand["style"] += style_loss_from_stats(stylized, s.style_stats, bb).item()
        recon = model.forward_with_params(c, f0_blocks)
        by_hand["reconstruction"] += reconstruction_loss(recon, c).item()
        by_hand["geometric"] += geometric_loss(c, s.style_rep, model, s.geo_transforms).item()
    for key, val in by_hand.items():
        assert comps[key] == pytest.approx(val / len(samples), rel=1e-4)


def test_total_loss_rejects_empty_batch():
    model = Stylizer.initialize(TINY, seed=6)
    bb = toy_backbone()
    with pytest.raises(ContractError):
        total_loss([], Tensor(np.ones(8, dtype=np.float32)), model, bb, LossWeights())


def test_all_losses_nonnegative():
    model = Stylizer.initialize(TINY, seed=7)
    bb = toy_backbone()
    rng = np.random.default_rng(15)
    for _ in range(5):
        a, b = rand_image(rng, 16), rand_image(rng, 16)
        assert content_loss(Tensor(a), Tensor(b), bb).item() >= 0
        assert style_loss(Tensor(a), Tensor(b), bb).item() >= 0
        assert reconstruction_loss(Tensor(a), Tensor(b)).item() >= 0


def test_psnr():
    a = np.full((3, 4, 4), 0.5)
    assert psnr(a, a) == float("inf")
    b = a + 0.1
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-6)
