"""The four training loss terms and their weighted sum.

Norm conventions: the content, style, and reconstruction terms are
root-sum-square L2 norms (per tap layer for features); the geometric term
is mean absolute error per element so its scale does not depend on
resolution. Feature statistics use population variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .backbone import FeatureBackbone
from .dihedral import ALL_TRANSFORMS, DihedralTransform
from .errors import ContractError, ShapeError

STAT_EPS = 1e-8  # keeps the std gradient finite on dead feature channels


@dataclass(frozen=True)
class LossWeights:
    content: float = 1.0
    style: float = 10.0
    reconstruction: float = 0.01
    geometric: float = 0.01

    def __post_init__(self):
        for name in ("content", "style", "reconstruction", "geometric"):
            if getattr(self, name) < 0:
                raise ContractError(f"loss weight {name} must be non-negative")

    def to_dict(self) -> dict:
        return {"content": self.content, "style": self.style,
                "reconstruction": self.reconstruction, "geometric": self.geometric}

    @classmethod
    def from_dict(cls, data: dict) -> "LossWeights":
        return cls(**data)


def _rss(diff: Tensor) -> Tensor:
    return ag.sqrt_(ag.sum_(ag.mul(diff, diff)))


def _mean_abs(diff: Tensor) -> Tensor:
    return ag.mean_(ag.abs_(diff))


def extract_features(image: Tensor, backbone: FeatureBackbone, taps) -> dict[str, Tensor]:
    """Tap features for an image; gradients reach the image, not the stack."""
    return backbone.features(image, frozenset(taps))


def _content_from_feats(f_i: dict, f_c: dict, taps) -> Tensor:
    return ag.add_n([_rss(ag.sub(f_i[l], f_c[l])) for l in sorted(taps)])


def _style_from_feats(f_i: dict, stats: dict, taps) -> Tensor:
    terms = []
    for layer in sorted(taps):
        mu_s, sd_s = stats[layer]
        terms.append(_rss(ag.sub(ag.channel_mean(f_i[layer]), Tensor(mu_s))))
        terms.append(_rss(ag.sub(ag.channel_std(f_i[layer], STAT_EPS), Tensor(sd_s))))
    return ag.add_n(terms)


def content_loss(stylized: Tensor, content: Tensor, backbone: FeatureBackbone) -> Tensor:
    """Sum over content taps of the L2 feature distance."""
    if stylized.shape != content.shape:
        raise ShapeError(f"content loss needs equal sizes, got {stylized.shape} vs {content.shape}")
    f_i = backbone.features(stylized, backbone.taps_content)
    f_c = backbone.features(content, backbone.taps_content)
    return _content_from_feats(f_i, f_c, backbone.taps_content)


def feature_statistics(backbone: FeatureBackbone, image: Tensor | np.ndarray):
    """Per-channel (mean, std) at every style tap, computed without grads.

    Style images never receive gradients, so these are plain arrays and can
    be cached per style for the whole training run.
    """
    img = image if isinstance(image, Tensor) else Tensor(np.asarray(image, dtype=backbone.dtype))
    stats = {}
    with ag.no_grad():
        feats = backbone.features(img, backbone.taps_style)
        for layer, f in feats.items():
            stats[layer] = (ag.channel_mean(f).data, ag.channel_std(f, STAT_EPS).data)
    return stats


def style_loss_from_stats(stylized: Tensor, stats: dict, backbone: FeatureBackbone) -> Tensor:
    feats = backbone.features(stylized, backbone.taps_style)
    return _style_from_feats(feats, stats, backbone.taps_style)


def style_loss(stylized: Tensor, style_image: Tensor, backbone: FeatureBackbone) -> Tensor:
    """Distance between per-channel feature statistics at the style taps.

    The two images may have different spatial sizes; the statistics are
    size-free.
    """
    return style_loss_from_stats(stylized, feature_statistics(backbone, style_image), backbone)


def reconstruction_loss(reconstructed: Tensor, content: Tensor) -> Tensor:
    """Pixel-space L2 norm between the identity-style output and the input."""
    if reconstructed.shape != content.shape:
        raise ShapeError(
            f"reconstruction loss needs equal shapes, got {reconstructed.shape} vs {content.shape}")
    return _rss(ag.sub(reconstructed, content))


def geometric_loss(content: Tensor, f: Tensor, stylizer,
                   transforms: tuple[DihedralTransform, ...] = ALL_TRANSFORMS,
                   base: Tensor | None = None) -> Tensor:
    """Consistency of stylization under flips and rotations.

    For each transform t this adds
    ``mean|S(c) - t^-1(S(t(c)))| + mean|S(t(c)) - t(S(c))|``
    where S stylizes with the fixed style f. Gradients propagate through
    both branches.
    """
    h, w = content.shape[-2], content.shape[-1]
    if any(not t.preserves_shape(h, w) for t in transforms):
        raise ShapeError(f"rotations need square input, got {h}x{w}")
    blocks = stylizer.adapted_params(f)
    stylized = base if base is not None else stylizer.forward_with_params(content, blocks)
    terms = []
    for t in transforms:
        if t.index == 0:
            # t(c) == c, so S(t(c)) is the already computed output
            transformed = stylized
        else:
            transformed = stylizer.forward_with_params(t.apply(content), blocks)
        terms.append(_mean_abs(ag.sub(stylized, t.inverse().apply(transformed))))
        terms.append(_mean_abs(ag.sub(transformed, t.apply(stylized))))
    return ag.add_n(terms)


@dataclass
class BatchSample:
    """One training example: a content crop paired with a sampled style."""

    content: np.ndarray
    style_id: str
    style_rep: Tensor
    style_stats: dict
    geo_transforms: tuple[DihedralTransform, ...] = ()


def total_loss(samples: list[BatchSample], identity_rep: Tensor, stylizer,
               backbone: FeatureBackbone, weights: LossWeights):
    """Weighted sum of the four terms, averaged over the batch.

    Returns ``(loss, components)`` where components holds the unweighted
    per-term means plus the weighted total, for logging.
    """
    if not samples:
        raise ContractError("total_loss needs a non-empty batch")
    b = len(samples)
    dtype = stylizer.dtype
    zero = Tensor(np.zeros((), dtype=dtype))
    l_content, l_style, l_recon, l_geo = zero, zero, zero, zero
    identity_blocks = stylizer.adapted_params(identity_rep)
    block_cache: dict[str, list] = {}
    taps_all = backbone.taps_content | backbone.taps_style
    for sample in samples:
        content = Tensor(np.asarray(sample.content, dtype=dtype))
        blocks = block_cache.get(sample.style_id)
        if blocks is None:
            blocks = stylizer.adapted_params(sample.style_rep)
            block_cache[sample.style_id] = blocks
        stylized = stylizer.forward_with_params(content, blocks)
        feats_i = None
        if weights.content or weights.style:
            feats_i = backbone.features(stylized, taps_all)
        if weights.content:
            feats_c = backbone.features(content, backbone.taps_content)
            l_content = ag.add(l_content, _content_from_feats(feats_i, feats_c, backbone.taps_content))
        if weights.style:
            l_style = ag.add(l_style, _style_from_feats(feats_i, sample.style_stats, backbone.taps_style))
        if weights.reconstruction:
            reconstructed = stylizer.forward_with_params(content, identity_blocks)
            l_recon = ag.add(l_recon, reconstruction_loss(reconstructed, content))
        if weights.geometric and sample.geo_transforms:
            geo = geometric_loss(content, sample.style_rep, stylizer,
                                 sample.geo_transforms, base=stylized)
            l_geo = ag.add(l_geo, geo)
    inv_b = 1.0 / b
    l_content = ag.scale(l_content, inv_b)
    l_style = ag.scale(l_style, inv_b)
    l_recon = ag.scale(l_recon, inv_b)
    l_geo = ag.scale(l_geo, inv_b)
    total = ag.add_n([
        ag.scale(l_content, weights.content),
        ag.scale(l_style, weights.style),
        ag.scale(l_recon, weights.reconstruction),
        ag.scale(l_geo, weights.geometric),
    ])
    components = {
        "content": l_content.item(),
        "style": l_style.item(),
        "reconstruction": l_recon.item(),
        "geometric": l_geo.item(),
        "total": total.item(),
    }
    return total, components


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB between two same-shape images."""
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
