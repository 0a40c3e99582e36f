"""Frozen feature stacks for the perceptual losses.

A backbone is a plain sequence of conv / relu / pool layers with named
taps. Weights load from a tensor archive and are never touched by any
optimizer; gradients flow to the image only. When no real VGG-16 archive
is available, ``toy_backbone`` builds a small fixed-seed random stack
with the same interface so the whole suite runs hermetically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import rng
from .autograd import Tensor
from .errors import ArchiveError, ConfigError, ShapeError

# layer spec tuples: ("conv", name, c_in, c_out, k) | ("relu", name) | ("pool", name)
LayerSpec = tuple

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# Standard 13-conv VGG-16 feature stack up to relu4_3, the deepest tap the
# style loss uses by default.
VGG16_LAYERS: tuple[LayerSpec, ...] = (
    ("conv", "conv1_1", 3, 64, 3), ("relu", "relu1_1"),
    ("conv", "conv1_2", 64, 64, 3), ("relu", "relu1_2"),
    ("pool", "pool1"),
    ("conv", "conv2_1", 64, 128, 3), ("relu", "relu2_1"),
    ("conv", "conv2_2", 128, 128, 3), ("relu", "relu2_2"),
    ("pool", "pool2"),
    ("conv", "conv3_1", 128, 256, 3), ("relu", "relu3_1"),
    ("conv", "conv3_2", 256, 256, 3), ("relu", "relu3_2"),
    ("conv", "conv3_3", 256, 256, 3), ("relu", "relu3_3"),
    ("pool", "pool3"),
    ("conv", "conv4_1", 256, 512, 3), ("relu", "relu4_1"),
    ("conv", "conv4_2", 512, 512, 3), ("relu", "relu4_2"),
    ("conv", "conv4_3", 512, 512, 3), ("relu", "relu4_3"),
)

VGG16_CONTENT_TAPS = frozenset({"relu3_3"})
VGG16_STYLE_TAPS = frozenset({"relu1_2", "relu2_2", "relu3_3", "relu4_3"})


@dataclass
class FeatureBackbone:
    """Frozen conv stack with named taps and fixed input preprocessing."""

    label: str
    layers: tuple[LayerSpec, ...]
    weights: dict[str, Tensor]
    taps_content: frozenset[str]
    taps_style: frozenset[str]
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD
    _mean_arr: np.ndarray = field(init=False, repr=False)
    _std_arr: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        names = self.layer_names()
        for tap in self.taps_content | self.taps_style:
            if tap not in names:
                raise ConfigError(f"tap {tap!r} is not a layer of backbone {self.label!r}")
        for t in self.weights.values():
            t.requires_grad = False
        dtype = next(iter(self.weights.values())).dtype if self.weights else np.float32
        self._mean_arr = np.asarray(self.mean, dtype=dtype).reshape(3, 1, 1)
        self._std_arr = np.asarray(self.std, dtype=dtype).reshape(3, 1, 1)

    def layer_names(self) -> set[str]:
        return {spec[1] for spec in self.layers}

    @property
    def dtype(self):
        return next(iter(self.weights.values())).dtype

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.weights.items()}

    def features(self, image: Tensor, taps: frozenset[str] | set[str]) -> dict[str, Tensor]:
        """Run the stack and collect the requested taps.

        Gradients flow back to ``image``; the stack weights never require
        them, so no optimizer can ever see a backbone gradient.
        """
        missing = set(taps) - self.layer_names()
        if missing:
            raise ConfigError(f"unknown tap names {sorted(missing)} for backbone {self.label!r}")
        if image.data.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"backbone expects a (3, h, w) image, got {image.shape}")
        x = ag.mul(ag.sub(image, Tensor(self._mean_arr)),
                   Tensor(1.0 / self._std_arr))
        out: dict[str, Tensor] = {}
        remaining = set(taps)
        for spec in self.layers:
            kind, name = spec[0], spec[1]
            if kind == "conv":
                k = spec[4]
                x = ag.conv2d(x, self.weights[f"{name}.w"], self.weights[f"{name}.b"],
                              stride=1, padding=(k - 1) // 2)
            elif kind == "relu":
                x = ag.relu(x)
            elif kind == "pool":
                x = ag.maxpool2(x)
            else:
                raise ConfigError(f"unknown layer kind {kind!r}")
            if name in remaining:
                out[name] = x
                remaining.discard(name)
                if not remaining:
                    break
        return out


def _conv_weight_names(layers) -> list[tuple[str, int, int, int]]:
    return [(spec[1], spec[2], spec[3], spec[4]) for spec in layers if spec[0] == "conv"]


TEST_BACKBONE_LAYERS: tuple[LayerSpec, ...] = (
    ("conv", "conv1", 3, 8, 3), ("relu", "relu1"),
    ("pool", "pool1"),
    ("conv", "conv2", 8, 16, 3), ("relu", "relu2"),
    ("pool", "pool2"),
    ("conv", "conv3", 16, 16, 3), ("relu", "relu3"),
)


def toy_backbone(seed: int = 11, dtype=np.float32) -> FeatureBackbone:
    """Hermetic stand-in for VGG: 3 conv layers, fixed-seed random weights."""
    weights: dict[str, Tensor] = {}
    for name, cin, cout, k in _conv_weight_names(TEST_BACKBONE_LAYERS):
        fan_in = cin * k * k
        bound = (2.0 / fan_in) ** 0.5  # keep relu activations alive
        gen = rng.stream(seed, "test-backbone", name)
        weights[f"{name}.w"] = Tensor(gen.uniform(-bound, bound, (cout, cin, k, k)).astype(dtype))
        weights[f"{name}.b"] = Tensor(gen.uniform(-0.05, 0.05, cout).astype(dtype))
    return FeatureBackbone(
        label=f"test-backbone-seed{seed}",
        layers=TEST_BACKBONE_LAYERS,
        weights=weights,
        taps_content=frozenset({"relu3"}),
        taps_style=frozenset({"relu1", "relu2", "relu3"}),
    )


def vgg16_from_archive(path) -> FeatureBackbone:
    """Load VGG-16 conv weights from a tensor archive.

    The archive must hold ``<conv>.w`` / ``<conv>.b`` for each conv layer
    named in ``VGG16_LAYERS``; see docs/formats.md and
    tools/convert_vgg16.py for producing one from a public weight release.
    """
    from .storage import load_archive
    try:
        arrays, metadata = load_archive(path)
    except FileNotFoundError:
        raise ArchiveError(
            f"backbone weights not found at {path!r}; convert a public "
            "VGG-16 release with tools/convert_vgg16.py first") from None
    weights: dict[str, Tensor] = {}
    for name, cin, cout, k in _conv_weight_names(VGG16_LAYERS):
        for suffix, shape in ((".w", (cout, cin, k, k)), (".b", (cout,))):
            key = name + suffix
            if key not in arrays:
                raise ArchiveError(f"backbone archive {path!r} is missing tensor {key!r}")
            if arrays[key].shape != shape:
                raise ArchiveError(
                    f"backbone tensor {key!r} has shape {arrays[key].shape}, expected {shape}")
            weights[key] = Tensor(arrays[key])
    mean = tuple(float(x) for x in metadata.get("preprocess_mean", ",".join(map(str, IMAGENET_MEAN))).split(","))
    std = tuple(float(x) for x in metadata.get("preprocess_std", ",".join(map(str, IMAGENET_STD))).split(","))
    return FeatureBackbone(
        label=metadata.get("label", "vgg16"),
        layers=VGG16_LAYERS,
        weights=weights,
        taps_content=VGG16_CONTENT_TAPS,
        taps_style=VGG16_STYLE_TAPS,
        mean=mean,
        std=std,
    )
