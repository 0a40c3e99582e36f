"""Joint training of network plus codebook, and frozen-network style
extension.

The general pipeline initializes every representation to the all-ones
vector, then each iteration samples b content crops with b style indices,
runs the four-term loss, and updates the network weights together with the
sampled representations and the identity entry. The incremental pipeline
freezes everything except the new representations, which makes the
no-forgetting guarantee structural: old bytes are never written.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from . import rng
from .autograd import Parameter, Tensor
from .backbone import FeatureBackbone
from .codebook import IDENTITY_ID, StyleCodebook, StyleRepresentation
from .dihedral import ALL_TRANSFORMS, DihedralTransform
from .errors import CodebookError, ConfigError, ContractError, NonFiniteError, TrainingAborted
from .losses import BatchSample, LossWeights, feature_statistics, total_loss
from .network import Stylizer
from .storage import save_codebook

GEO_MODES = ("all8", "sample1")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults are the desk-scale setup.

    The full-size regime from the source material (batch 8, 3M iterations,
    halving every 0.75M, 256/512 px crops) uses the same knobs scaled up.
    """

    iterations: int = 2000
    batch_size: int = 4
    lr0: float = 1e-3
    lr_halve_every: int = 500
    loss_weights: LossWeights = field(default_factory=LossWeights)
    content_crop: int = 64
    style_size: int = 128
    seed: int = 7
    incremental: bool = False
    geo_mode: str = "sample1"
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigError("iterations must be >= 0 and batch_size >= 1")
        if self.lr_halve_every < 1 or self.checkpoint_every < 1:
            raise ConfigError("lr_halve_every and checkpoint_every must be positive")
        if self.content_crop < 4 or self.content_crop % 4:
            raise ConfigError("content_crop must be a positive multiple of 4")
        if self.geo_mode not in GEO_MODES:
            raise ConfigError(f"geo_mode must be one of {GEO_MODES}")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["loss_weights"] = self.loss_weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown train config fields: {sorted(bad)}")
        kwargs = dict(data)
        if "loss_weights" in kwargs:
            kwargs["loss_weights"] = LossWeights.from_dict(kwargs["loss_weights"])
        return cls(**kwargs)


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """Step schedule: lr0 halved every ``lr_halve_every`` iterations."""
    if iteration < 0:
        raise ContractError("iteration must be >= 0")
    return cfg.lr0 * 0.5 ** (iteration // cfg.lr_halve_every)


class AdamState:
    """Per-parameter moments with bias correction.

    Steps are counted per parameter and a step with an exactly zero
    gradient is skipped outright, so untouched parameters (for example
    styles not sampled this iteration) never move.
    """

    def __init__(self, params: list[Parameter], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.moments = {
            p.name: (np.zeros_like(p.data), np.zeros_like(p.data)) for p in params
        }
        self.steps = {p.name: 0 for p in params}


def adam_step(params: list[Parameter], state: AdamState, lr: float) -> None:
    """One bias-corrected update; gradients are zeroed afterwards."""
    for p in params:
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}")
        if not np.any(g):
            continue
        m, v = state.moments[p.name]
        state.steps[p.name] += 1
        t = state.steps[p.name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.zero_grad()


def sample_minibatch(gen: np.random.Generator, contents: list[np.ndarray],
                     style_ids: list[str], cfg: TrainConfig) -> list[tuple[np.ndarray, str]]:
    """b square content crops paired with b uniformly drawn style ids."""
    if not contents or not style_ids:
        raise ContractError("content and style pools must be non-empty")
    crop = cfg.content_crop
    batch = []
    for _ in range(cfg.batch_size):
        img = contents[int(gen.integers(len(contents)))]
        _, h, w = img.shape
        if h < crop or w < crop:
            raise ConfigError(f"content image {h}x{w} smaller than crop {crop}")
        top = int(gen.integers(h - crop + 1))
        left = int(gen.integers(w - crop + 1))
        style = style_ids[int(gen.integers(len(style_ids)))]
        batch.append((img[:, top:top + crop, left:left + crop].copy(), style))
    return batch


def _geo_transforms(cfg: TrainConfig, gen: np.random.Generator) -> tuple[DihedralTransform, ...]:
    if not cfg.loss_weights.geometric:
        return ()
    if cfg.geo_mode == "all8":
        return ALL_TRANSFORMS
    # sample1: one random non-identity transform (the identity term is
    # identically zero); faster but not the faithful all-8 sum
    return (DihedralTransform(int(gen.integers(1, 8))),)


@dataclass
class CheckpointInfo:
    iteration: int
    digest: str
    probe_losses: dict


@dataclass
class TrainReport:
    """One record per iteration plus checkpoint digests and probe losses."""

    records: list[dict] = field(default_factory=list)
    checkpoints: list[CheckpointInfo] = field(default_factory=list)
    wall_clock_s: float = 0.0
    final_digest: str = ""
    per_style_loss: dict[str, float] = field(default_factory=dict)

    def save_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record) + "\n")

    def mean_total(self, start: int, stop: int) -> float:
        vals = [r["total"] for r in self.records[start:stop]]
        return float(np.mean(vals)) if vals else float("nan")


def probe_batch(cfg: TrainConfig, contents: list[np.ndarray],
                style_ids: list[str]) -> list[tuple[np.ndarray, str]]:
    """Deterministic batch used to re-evaluate checkpoint losses."""
    return sample_minibatch(rng.stream(cfg.seed, "probe"), contents, style_ids, cfg)


def evaluate_batch(stylizer: Stylizer, backbone: FeatureBackbone, cfg: TrainConfig,
                   batch: list[tuple[np.ndarray, str]],
                   reps: dict[str, Tensor], f0: Tensor,
                   stats: dict[str, dict], weights: LossWeights) -> dict:
    """Loss components of a fixed batch under the current weights (no grads)."""
    geo = ALL_TRANSFORMS if cfg.geo_mode == "all8" else (DihedralTransform(1),)
    samples = [BatchSample(content=c, style_id=s, style_rep=reps[s],
                           style_stats=stats[s], geo_transforms=geo if weights.geometric else ())
               for c, s in batch]
    with ag.no_grad():
        _, comps = total_loss(samples, f0, stylizer, backbone, weights)
    return comps


def _style_parameters(ids: list[str], style_dim: int, dtype) -> dict[str, Parameter]:
    # Alg-style init: every representation starts as the all-ones vector
    return {sid: Parameter(np.ones(style_dim, dtype=dtype), f"style:{sid}") for sid in ids}


def _codebook_from_params(style_dim: int, reps: dict[str, Parameter],
                          names: dict[str, str], fingerprint: str) -> StyleCodebook:
    cb = StyleCodebook(style_dim, fingerprint)
    for sid, param in reps.items():
        values = param.data.astype(np.float32).copy()
        if sid == IDENTITY_ID:
            cb.replace(StyleRepresentation(IDENTITY_ID, "identity", values))
        else:
            cb.add(StyleRepresentation(sid, names.get(sid, sid), values))
    return cb


def _run_loop(cfg: TrainConfig, contents, style_ids, reps, f0, stats, weights,
              stylizer, backbone, trainable, progress,
              checkpoint_cb, report: TrainReport) -> None:
    gen_batch = rng.stream(cfg.seed, "batch")
    gen_geo = rng.stream(cfg.seed, "geo")
    state = AdamState(trainable)
    start = time.perf_counter()
    for it in range(cfg.iterations):
        t0 = time.perf_counter()
        lr = lr_at(it, cfg)
        batch = sample_minibatch(gen_batch, contents, style_ids, cfg)
        samples = [BatchSample(content=c, style_id=s, style_rep=reps[s],
                               style_stats=stats[s],
                               geo_transforms=_geo_transforms(cfg, gen_geo))
                   for c, s in batch]
        try:
            loss, comps = total_loss(samples, f0, stylizer, backbone, weights)
            if not np.isfinite(comps["total"]):
                raise NonFiniteError(f"loss diverged at iteration {it}")
            ag.backward(loss)
            adam_step(trainable, state, lr)
        except NonFiniteError as exc:
            report.wall_clock_s = time.perf_counter() - start
            raise TrainingAborted(
                f"aborted at iteration {it}: {exc}; last good checkpoint is "
                f"{report.checkpoints[-1].iteration if report.checkpoints else 'none'}",
                report=report) from exc
        record = {"iteration": it, "lr": lr, "millis": (time.perf_counter() - t0) * 1e3,
                  "styles": sorted({s for _, s in batch})}
        record.update(comps)
        report.records.append(record)
        if progress is not None:
            progress(it, comps)
        if checkpoint_cb is not None and ((it + 1) % cfg.checkpoint_every == 0):
            checkpoint_cb(it + 1)
    report.wall_clock_s = time.perf_counter() - start


def train_general(cfg: TrainConfig, contents: list[np.ndarray],
                  style_images: dict[str, np.ndarray], stylizer: Stylizer,
                  backbone: FeatureBackbone, out_dir=None, style_names=None,
                  progress=None) -> tuple[StyleCodebook, TrainReport]:
    """Joint training of the network and the codebook.

    Returns the trained codebook (fingerprinted against the final weights)
    and the per-iteration report. With ``out_dir`` set, checkpoints land
    there every ``checkpoint_every`` iterations plus a final
    ``model.sta`` / ``codebook.json`` / ``train_log.jsonl``.
    """
    if not style_images:
        raise ContractError("train_general needs at least one style image")
    style_ids = sorted(style_images)
    dtype = stylizer.dtype
    reps = _style_parameters([IDENTITY_ID] + style_ids, stylizer.config.style_dim, dtype)
    f0 = reps[IDENTITY_ID]
    stats = {sid: feature_statistics(backbone, style_images[sid]) for sid in style_ids}
    trainable = stylizer.parameters() + [reps[sid] for sid in style_ids] + [f0]
    names = dict(style_names or {})
    report = TrainReport()
    pbatch = probe_batch(cfg, contents, style_ids)

    def checkpoint(iteration: int) -> None:
        digest = ""
        if out_dir is not None:
            digest = stylizer.save(f"{out_dir}/checkpoint-{iteration:06d}.sta",
                                   {"iteration": str(iteration)})
        probe = evaluate_batch(stylizer, backbone, cfg, pbatch, reps, f0, stats,
                               cfg.loss_weights)
        report.checkpoints.append(CheckpointInfo(iteration, digest, probe))

    _run_loop(cfg, contents, style_ids, reps, f0, stats, cfg.loss_weights,
              stylizer, backbone, trainable, progress, checkpoint, report)

    if cfg.iterations % cfg.checkpoint_every:
        checkpoint(cfg.iterations)
    digest = stylizer.fingerprint()
    report.final_digest = digest
    codebook = _codebook_from_params(stylizer.config.style_dim, reps, names, digest)
    if out_dir is not None:
        # model.sta carries only the config metadata, so its file digest
        # equals the fingerprint the codebook is bound to
        stylizer.save(f"{out_dir}/model.sta")
        save_codebook(codebook, f"{out_dir}/codebook.json")
        report.save_log(f"{out_dir}/train_log.jsonl")
    return codebook, report


def train_incremental(cfg: TrainConfig, contents: list[np.ndarray],
                      new_style_images: dict[str, np.ndarray], stylizer: Stylizer,
                      codebook: StyleCodebook, backbone: FeatureBackbone,
                      style_names=None, progress=None) -> tuple[StyleCodebook, TrainReport]:
    """Learn new styles against frozen weights and a frozen codebook.

    Only the new representations are trainable; the loss drops the
    reconstruction term. The returned codebook holds every old entry
    bit-identical plus the new ones; network weights are untouched, which
    the function verifies by re-fingerprinting.
    """
    if not new_style_images:
        raise ContractError("train_incremental needs at least one new style")
    clashes = sorted(set(new_style_images) & set(codebook.ids()))
    if clashes:
        raise CodebookError(f"new style ids already in codebook: {clashes}")
    if codebook.network_fingerprint:
        actual = stylizer.fingerprint()
        if actual != codebook.network_fingerprint:
            raise CodebookError(
                "codebook was trained against different weights: "
                f"{codebook.network_fingerprint[:12]} vs {actual[:12]}")
    new_ids = sorted(new_style_images)
    dtype = stylizer.dtype
    reps = _style_parameters(new_ids, stylizer.config.style_dim, dtype)
    stats = {sid: feature_statistics(backbone, new_style_images[sid]) for sid in new_ids}
    weights = replace(cfg.loss_weights, reconstruction=0.0)
    f0 = Tensor(codebook.identity.values.astype(dtype))
    names = dict(style_names or {})
    report = TrainReport()

    before = stylizer.fingerprint()
    stylizer.set_trainable(False)
    try:
        trainable = [reps[sid] for sid in new_ids]
        _run_loop(cfg, contents, new_ids, reps, f0, stats, weights,
                  stylizer, backbone, trainable, progress, None, report)
    finally:
        stylizer.set_trainable(True)
    after = stylizer.fingerprint()
    if after != before:
        raise TrainingAborted("frozen weights changed during incremental training", report)

    merged = codebook.copy()
    for sid in new_ids:
        merged.add(StyleRepresentation(sid, names.get(sid, sid),
                                       reps[sid].data.astype(np.float32).copy()))
    # convergence summary: mean total over the last 50 iterations sampling each style
    for sid in new_ids:
        vals = [r["total"] for r in report.records if sid in r["styles"]][-50:]
        report.per_style_loss[sid] = float(np.mean(vals)) if vals else float("nan")
    report.final_digest = after
    return merged, report
