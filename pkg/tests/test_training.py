"""Trainer tests: Adam against an independent oracle, the lr schedule,
batch sampling statistics, determinism, and the frozen-network guarantee."""

import numpy as np
import pytest

from styleshift import autograd as ag
from styleshift import rng
from styleshift.autograd import Parameter
from styleshift.backbone import toy_backbone
from styleshift.codebook import IDENTITY_ID
from styleshift.errors import (CodebookError, ConfigError, ContractError,
                               NonFiniteError, TrainingAborted)
from styleshift.losses import LossWeights
from styleshift.network import NetworkConfig, Stylizer
from styleshift.synthetic import content_pool, style_pool
from styleshift.training import (AdamState, TrainConfig, adam_step, evaluate_batch,
                                 lr_at, probe_batch, sample_minibatch,
                                 train_general, train_incremental)

TINY = NetworkConfig(encoder_channels=(4, 6, 8), sab_count=2, mlp_hidden=6, style_dim=8)


def adam_oracle(x0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam, written independently of the trainer."""
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=np.float64)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        x = x - lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
    return x


def quick_config(**kw):
    base = dict(iterations=8, batch_size=2, content_crop=16, style_size=32,
                lr_halve_every=4, checkpoint_every=4, seed=7)
    base.update(kw)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def test_adam_first_step_magnitude():
    p = Parameter(np.array([0.0]), "p")
    state = AdamState([p])
    p.grad = np.array([1.0])
    adam_step([p], state, lr=0.001)
    assert abs(p.data[0] + 0.001) < 1e-6
    np.testing.assert_array_equal(p.grad, [0.0])


def test_adam_zero_gradient_is_noop():
    p = Parameter(np.array([1.5, -2.0]), "p")
    state = AdamState([p])
    before = p.data.copy()
    for _ in range(3):
        adam_step([p], state, lr=0.1)
    np.testing.assert_array_equal(p.data, before)


def test_adam_zero_grad_noop_even_with_momentum():
    p = Parameter(np.array([1.0]), "p")
    state = AdamState([p])
    p.grad = np.array([1.0])
    adam_step([p], state, lr=0.01)
    moved = p.data.copy()
    adam_step([p], state, lr=0.01)  # grad zeroed by the previous step
    np.testing.assert_array_equal(p.data, moved)


def test_adam_five_steps_match_oracle():
    # minimize 0.5 * x^2 so grad = x, in double precision
    p = Parameter(np.array([1.0, -3.0], dtype=np.float64), "p")
    state = AdamState([p])
    grads = []
    for _ in range(5):
        g = p.data.copy()
        grads.append(g)
        p.grad = g
        adam_step([p], state, lr=0.05)
    want = adam_oracle([1.0, -3.0], grads, lr=0.05)
    np.testing.assert_allclose(p.data, want, atol=1e-10)


def test_adam_rejects_nonfinite_gradient():
    p = Parameter(np.array([0.0]), "p")
    state = AdamState([p])
    p.grad = np.array([np.nan])
    with pytest.raises(NonFiniteError, match="'p'"):
        adam_step([p], state, lr=0.1)


# ---------------------------------------------------------------------------
# learning-rate schedule
# ---------------------------------------------------------------------------

def test_lr_schedule_values():
    cfg = TrainConfig(lr0=0.001, lr_halve_every=500)
    assert lr_at(0, cfg) == 0.001
    assert lr_at(499, cfg) == 0.001
    assert lr_at(500, cfg) == 0.0005
    paper = TrainConfig(lr0=0.001, lr_halve_every=750_000, iterations=3_000_000)
    assert lr_at(2_900_000, paper) == pytest.approx(0.000125)


def test_lr_schedule_nonincreasing():
    cfg = TrainConfig(lr0=0.001, lr_halve_every=100)
    values = [lr_at(i, cfg) for i in range(0, 1000, 37)]
    assert all(a >= b for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# minibatch sampling
# ---------------------------------------------------------------------------

def test_minibatch_deterministic_for_fixed_seed():
    cfg = quick_config(batch_size=4)
    contents = content_pool(1, 4, size=32)
    a = sample_minibatch(rng.stream(cfg.seed, "batch"), contents, ["s0", "s1"], cfg)
    b = sample_minibatch(rng.stream(cfg.seed, "batch"), contents, ["s0", "s1"], cfg)
    for (ca, sa), (cb, sb) in zip(a, b):
        assert sa == sb and ca.tobytes() == cb.tobytes()


def test_minibatch_single_style():
    cfg = quick_config(batch_size=1)
    contents = content_pool(1, 2, size=32)
    batch = sample_minibatch(rng.stream(0, "batch"), contents, ["only"], cfg)
    assert batch[0][1] == "only"
    assert batch[0][0].shape == (3, 16, 16)


def test_minibatch_style_frequencies_within_3_sigma():
    cfg = quick_config(batch_size=1)
    contents = content_pool(2, 2, size=32)
    styles = ["a", "b", "c", "d"]
    gen = rng.stream(123, "batch")
    counts = {s: 0 for s in styles}
    n = 10_000
    for _ in range(n):
        _, sid = sample_minibatch(gen, contents, styles, cfg)[0]
        counts[sid] += 1
    p = 1 / len(styles)
    sigma = np.sqrt(n * p * (1 - p))
    for s in styles:
        assert abs(counts[s] - n * p) <= 3 * sigma, counts


def test_minibatch_rejects_empty_pools():
    cfg = quick_config()
    with pytest.raises(ContractError):
        sample_minibatch(rng.stream(0, "batch"), [], ["a"], cfg)
    with pytest.raises(ContractError):
        sample_minibatch(rng.stream(0, "batch"), content_pool(0, 1, 32), [], cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(geo_mode="all9")
    with pytest.raises(ConfigError):
        TrainConfig(content_crop=30)


# ---------------------------------------------------------------------------
# general training
# ---------------------------------------------------------------------------

def small_world(seed=5, n_styles=2):
    model = Stylizer.initialize(TINY, seed=seed)
    bb = toy_backbone()
    contents = content_pool(seed, 3, size=24)
    styles = style_pool(seed, n_styles, size=32)
    return model, bb, contents, styles


def test_zero_iterations_changes_nothing():
    model, bb, contents, styles = small_world()
    before = {n: p.data.copy() for n, p in model.params.items()}
    cfg = quick_config(iterations=0)
    codebook, report = train_general(cfg, contents, styles, model, bb)
    assert report.records == []
    for n, p in model.params.items():
        assert p.data.tobytes() == before[n].tobytes()
    for rep in codebook.entries():
        np.testing.assert_array_equal(rep.values, np.ones(8, dtype=np.float32))


def test_training_is_bit_deterministic():
    cfg = quick_config()
    outs = []
    for _ in range(2):
        model, bb, contents, styles = small_world()
        codebook, _ = train_general(cfg, contents, styles, model, bb)
        outs.append((model.fingerprint(),
                     {sid: codebook.get(sid).values.tobytes() for sid in codebook.ids()}))
    assert outs[0] == outs[1]


def test_training_updates_codebook_and_binds_fingerprint(tmp_path):
    model, bb, contents, styles = small_world()
    cfg = quick_config()
    codebook, report = train_general(cfg, contents, styles, model, bb, out_dir=str(tmp_path))
    assert codebook.network_fingerprint == model.fingerprint()
    moved = [sid for sid in codebook.ids()
             if not np.array_equal(codebook.get(sid).values, np.ones(8, dtype=np.float32))]
    assert moved, "at least some representations should have moved"
    assert (tmp_path / "model.sta").exists()
    assert (tmp_path / "codebook.json").exists()
    assert (tmp_path / "train_log.jsonl").exists()
    assert len(report.records) == cfg.iterations
    assert (tmp_path / "checkpoint-000004.sta").exists()


def test_checkpoint_probe_losses_reproducible():
    model, bb, contents, styles = small_world()
    cfg = quick_config()
    codebook, report = train_general(cfg, contents, styles, model, bb)
    last = report.checkpoints[-1]
    assert last.iteration == cfg.iterations
    reps = {sid: ag.Tensor(codebook.get(sid).values) for sid in sorted(styles)}
    f0 = ag.Tensor(codebook.identity.values)
    from styleshift.losses import feature_statistics
    stats = {sid: feature_statistics(bb, styles[sid]) for sid in styles}
    batch = probe_batch(cfg, contents, sorted(styles))
    again = evaluate_batch(model, bb, cfg, batch, reps, f0, stats, cfg.loss_weights)
    for key, val in last.probe_losses.items():
        assert again[key] == pytest.approx(val, abs=1e-4)


def test_backbone_untouched_by_training():
    model, bb, contents, styles = small_world()
    before = {n: t.data.copy() for n, t in bb.weights.items()}
    train_general(quick_config(), contents, styles, model, bb)
    for n, t in bb.weights.items():
        assert t.data.tobytes() == before[n].tobytes()


def test_training_aborts_on_divergence():
    model, bb, contents, styles = small_world()
    # finite but huge head weights overflow the predicted kernels, which
    # turns the block statistics into NaN during the forward pass
    model.params["sab0.kernel.fc2.w"].data[:] = 3e38
    with pytest.raises(TrainingAborted):
        train_general(quick_config(), contents, styles, model, bb)


# ---------------------------------------------------------------------------
# incremental training
# ---------------------------------------------------------------------------

def trained_base(tmp_path=None):
    model, bb, contents, styles = small_world()
    codebook, _ = train_general(quick_config(), contents, styles, model, bb)
    return model, bb, contents, codebook


def test_incremental_default_iterations_is_3000():
    assert TrainConfig(incremental=True).iterations == 2000  # desk default
    # the shipped service/CLI default for new styles is 3000; pinned there
    from styleshift.cli import INCREMENTAL_ITERATIONS_DEFAULT
    assert INCREMENTAL_ITERATIONS_DEFAULT == 3000


def test_incremental_freezes_weights_and_old_entries():
    model, bb, contents, codebook = trained_base()
    weights_before = {n: p.data.copy() for n, p in model.params.items()}
    entries_before = {sid: codebook.get(sid).values.copy() for sid in codebook.ids()}
    new_styles = {f"new{i}": img for i, img in enumerate(style_pool(99, 2, size=32).values())}
    cfg = quick_config(iterations=6, incremental=True)
    merged, report = train_incremental(cfg, contents, new_styles, model, codebook, bb)
    for n, p in model.params.items():
        assert p.data.tobytes() == weights_before[n].tobytes()
    for sid, vals in entries_before.items():
        assert merged.get(sid).values.tobytes() == vals.tobytes()
    for sid in new_styles:
        assert sid in merged
        assert sid in report.per_style_loss
    assert merged.network_fingerprint == codebook.network_fingerprint


def test_incremental_old_outputs_bit_identical():
    model, bb, contents, codebook = trained_base()
    img = contents[0][:, :16, :16]
    before = {sid: model.stylize_array(img, codebook.get(sid).values).tobytes()
              for sid in codebook.ids()}
    new_styles = {"fresh": style_pool(7, 1, size=32)["style00"]}
    cfg = quick_config(iterations=5, incremental=True)
    merged, _ = train_incremental(cfg, contents, new_styles, model, codebook, bb)
    for sid, blob in before.items():
        assert model.stylize_array(img, merged.get(sid).values).tobytes() == blob


def test_incremental_rejects_id_collision():
    model, bb, contents, codebook = trained_base()
    existing = [sid for sid in codebook.ids() if sid != IDENTITY_ID][0]
    with pytest.raises(CodebookError, match=existing):
        train_incremental(quick_config(incremental=True), contents,
                          {existing: style_pool(1, 1, 32)["style00"]}, model, codebook, bb)


def test_incremental_rejects_fingerprint_mismatch():
    model, bb, contents, codebook = trained_base()
    other = Stylizer.initialize(TINY, seed=123)
    with pytest.raises(CodebookError, match="different weights"):
        train_incremental(quick_config(incremental=True), contents,
                          {"fresh": style_pool(3, 1, 32)["style00"]}, other, codebook, bb)


def test_incremental_same_image_same_seed_repeatable():
    model, bb, contents, codebook = trained_base()
    img = style_pool(42, 1, size=32)["style00"]
    cfg = quick_config(iterations=6, incremental=True)
    first, _ = train_incremental(cfg, contents, {"newA": img}, model, codebook, bb)
    second, _ = train_incremental(cfg, contents, {"newB": img}, model, codebook, bb)
    va = first.get("newA").values
    vb = second.get("newB").values
    assert np.max(np.abs(va - vb)) < 1e-3
