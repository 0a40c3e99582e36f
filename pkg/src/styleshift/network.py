"""The style-conditioned generator.

Layout: a 3-layer convolutional encoder, a stack of style-aware blocks,
and a mirrored decoder. Each block owns three small MLP heads that expand
a style vector into per-style depthwise kernels, normalization scale and
shift, and channel gates. The heads are the only place style enters the
network, so a stored style costs just its code vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import autograd as ag
from . import rng
from .autograd import Parameter, Tensor
from .errors import ConfigError, PaddingRequiredError, ShapeError


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture knobs; the shipped large config lives in configs/."""

    encoder_channels: tuple[int, int, int] = (16, 32, 64)
    sab_count: int = 3
    sconv_kernel: tuple[int, int] = (3, 3)
    mlp_hidden: int = 64
    style_dim: int = 16
    eps: float = 1e-5
    io_kernel: int = 3      # first encoder / last decoder convolution
    mid_kernel: int = 3     # all other encoder/decoder convolutions
    downsample: str = "conv"  # "conv": strided conv; "pool": stride 1 + max pool

    def __post_init__(self):
        if self.sab_count < 1:
            raise ConfigError("sab_count must be >= 1")
        kw, kh = self.sconv_kernel
        if kw % 2 == 0 or kh % 2 == 0:
            raise ConfigError(f"sconv kernel must be odd, got {kw}x{kh}")
        if self.io_kernel % 2 == 0 or self.mid_kernel % 2 == 0:
            raise ConfigError("encoder/decoder kernel sizes must be odd")
        if self.style_dim < 1:
            raise ConfigError("style_dim must be positive")
        if self.downsample not in ("conv", "pool"):
            raise ConfigError(f"unknown downsample mode {self.downsample!r}")
        if len(self.encoder_channels) != 3:
            raise ConfigError("encoder_channels must name exactly three widths")

    @property
    def feature_channels(self) -> int:
        return self.encoder_channels[2]

    def to_dict(self) -> dict:
        return {
            "encoder_channels": list(self.encoder_channels),
            "sab_count": self.sab_count,
            "sconv_kernel": list(self.sconv_kernel),
            "mlp_hidden": self.mlp_hidden,
            "style_dim": self.style_dim,
            "eps": self.eps,
            "io_kernel": self.io_kernel,
            "mid_kernel": self.mid_kernel,
            "downsample": self.downsample,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown network config fields: {sorted(bad)}")
        kwargs = dict(data)
        for key in ("encoder_channels", "sconv_kernel"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def parameter_shapes(config: NetworkConfig) -> dict[str, tuple[tuple[int, ...], int]]:
    """Name -> (shape, fan_in) for every stored parameter, in stable order."""
    c1, c2, c3 = config.encoder_channels
    k0, km = config.io_kernel, config.mid_kernel
    kw, kh = config.sconv_kernel
    cdim, hidden = config.style_dim, config.mlp_hidden
    shapes: dict[str, tuple[tuple[int, ...], int]] = {}

    def conv(name, cin, cout, k):
        shapes[f"{name}.w"] = ((cout, cin, k, k), cin * k * k)
        shapes[f"{name}.b"] = ((cout,), cin * k * k)

    def head(name, out_dim):
        shapes[f"{name}.fc1.w"] = ((hidden, cdim), cdim)
        shapes[f"{name}.fc1.b"] = ((hidden,), cdim)
        shapes[f"{name}.fc2.w"] = ((out_dim, hidden), hidden)
        shapes[f"{name}.fc2.b"] = ((out_dim,), hidden)

    conv("enc1", 3, c1, k0)
    conv("enc2", c1, c2, km)
    conv("enc3", c2, c3, km)
    for i in range(config.sab_count):
        head(f"sab{i}.kernel", c3 * kw * kh)
        head(f"sab{i}.norm", 2 * c3)
        head(f"sab{i}.gate", c3)
    conv("dec1", c3, c2, km)
    conv("dec2", c2, c1, km)
    conv("dec3", c1, 3, k0)
    return shapes


class BlockParams(NamedTuple):
    """Adapted per-style parameters for one style-aware block."""

    kernels: Tensor   # (c, 1, kh, kw) depthwise kernels
    scale: Tensor     # (c,) multiplies the normalized feature
    shift: Tensor     # (c,) added after scaling
    gate: Tensor      # (c,) channel gate in (0, 1)


class Stylizer:
    """Encoder + style-aware blocks + decoder, with hypernetwork heads."""

    def __init__(self, config: NetworkConfig, params: dict[str, Parameter]):
        self.config = config
        expected = parameter_shapes(config)
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ConfigError(f"parameter set mismatch: missing {missing}, extra {extra}")
        for name, (shape, _) in expected.items():
            if tuple(params[name].shape) != shape:
                raise ShapeError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        self.params = {name: params[name] for name in expected}

    @classmethod
    def initialize(cls, config: NetworkConfig, seed: int = 0, dtype=np.float32) -> "Stylizer":
        params = {}
        for name, (shape, fan_in) in parameter_shapes(config).items():
            if name.endswith(".b"):
                params[name] = Parameter(np.zeros(shape, dtype=dtype), name)
            else:
                params[name] = Parameter(rng.uniform_init(seed, name, shape, fan_in, dtype), name)
        return cls(config, params)

    @property
    def dtype(self):
        return self.params["enc1.w"].dtype

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def set_trainable(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def fingerprint(self) -> str:
        from .storage import archive_digest
        return archive_digest(self.named_arrays(), self._metadata())

    def _metadata(self) -> dict[str, str]:
        import json
        return {"network_config": json.dumps(self.config.to_dict(), sort_keys=True)}

    def save(self, path, extra_metadata: dict[str, str] | None = None) -> str:
        """Archive the weights plus the config needed to rebuild; returns digest."""
        from .storage import save_archive
        metadata = self._metadata()
        metadata.update(extra_metadata or {})
        return save_archive(self.named_arrays(), path, metadata)

    @classmethod
    def load(cls, path) -> "Stylizer":
        import json
        from .errors import ArchiveError
        from .storage import load_archive
        arrays, metadata = load_archive(path)
        if "network_config" not in metadata:
            raise ArchiveError(f"{path}: archive does not describe a generator (no network_config)")
        config = NetworkConfig.from_dict(json.loads(metadata["network_config"]))
        params = {name: Parameter(arr, name) for name, arr in arrays.items()}
        return cls(config, params)

    # -- forward pieces ------------------------------------------------------

    def _conv(self, x, name, stride, k):
        return ag.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"],
                         stride=stride, padding=(k - 1) // 2)

    def encode(self, content: Tensor) -> Tensor:
        """Content image (3, h, w) in [0, 1] -> feature (c3, h/4, w/4)."""
        if content.data.ndim != 3 or content.shape[0] != 3:
            raise ShapeError(f"encode expects a (3, h, w) image, got {content.shape}")
        h, w = content.shape[1], content.shape[2]
        if h % 4 or w % 4:
            raise PaddingRequiredError(
                f"input {h}x{w} is not divisible by 4; reflect-pad first (see stylize_any_size)")
        cfg = self.config
        if cfg.downsample == "conv":
            x = ag.relu(self._conv(content, "enc1", 1, cfg.io_kernel))
            x = ag.relu(self._conv(x, "enc2", 2, cfg.mid_kernel))
            x = ag.relu(self._conv(x, "enc3", 2, cfg.mid_kernel))
        else:
            x = ag.maxpool2(ag.relu(self._conv(content, "enc1", 1, cfg.io_kernel)))
            x = ag.maxpool2(ag.relu(self._conv(x, "enc2", 1, cfg.mid_kernel)))
            x = ag.relu(self._conv(x, "enc3", 1, cfg.mid_kernel))
        return x

    def decode(self, feature: Tensor) -> Tensor:
        """Feature (c3, h, w) -> image (3, 4h, 4w) squashed into [0, 1]."""
        cfg = self.config
        x = ag.relu(self._conv(feature, "dec1", 1, cfg.mid_kernel))
        x = ag.nearest_up2(x)
        x = ag.relu(self._conv(x, "dec2", 1, cfg.mid_kernel))
        x = ag.nearest_up2(x)
        x = self._conv(x, "dec3", 1, cfg.io_kernel)
        return ag.sigmoid(x)

    def _head(self, prefix: str, f: Tensor) -> Tensor:
        hidden = ag.relu(ag.linear(f, self.params[f"{prefix}.fc1.w"], self.params[f"{prefix}.fc1.b"]))
        return ag.linear(hidden, self.params[f"{prefix}.fc2.w"], self.params[f"{prefix}.fc2.b"])

    def adapted_params(self, f: Tensor) -> list[BlockParams]:
        """Expand a style vector into per-block adapted parameters.

        Pure function of (f, weights): two calls with the same inputs give
        bit-identical results, which makes per-style caching sound.
        """
        if f.data.shape != (self.config.style_dim,):
            raise ShapeError(f"style vector must have shape ({self.config.style_dim},), got {f.shape}")
        c3 = self.config.feature_channels
        kw, kh = self.config.sconv_kernel
        blocks = []
        for i in range(self.config.sab_count):
            kernels = ag.reshape(self._head(f"sab{i}.kernel", f), (c3, 1, kh, kw))
            norm = self._head(f"sab{i}.norm", f)
            scale = ag.narrow(norm, 0, c3)
            shift = ag.narrow(norm, c3, c3)
            gate = ag.sigmoid(self._head(f"sab{i}.gate", f))
            blocks.append(BlockParams(kernels, scale, shift, gate))
        return blocks

    def block_internals(self, feature: Tensor, bp: BlockParams) -> dict[str, Tensor]:
        """One style-aware block, returning the intermediate tensors.

        conv_out: depthwise conv of the feature with the predicted kernels;
        normed:   scale * instance_norm(conv_out) + shift;
        gated:    feature * gate (gate broadcast over space);
        out:      relu(normed + gated) + feature (residual wiring).
        """
        c3 = self.config.feature_channels
        if feature.shape[0] != c3:
            raise ShapeError(f"block expects {c3} channels, got {feature.shape}")
        conv_out = ag.depthwise_conv2d_dynamic(feature, bp.kernels, groups=c3)
        unit, _, _ = ag.instance_norm(conv_out, eps=self.config.eps)
        normed = ag.add(ag.mul(unit, ag.reshape(bp.scale, (c3, 1, 1))),
                        ag.reshape(bp.shift, (c3, 1, 1)))
        gated = ag.mul(feature, ag.reshape(bp.gate, (c3, 1, 1)))
        out = ag.add(ag.relu(ag.add(normed, gated)), feature)
        return {"conv_out": conv_out, "normed": normed, "gated": gated, "out": out}

    def block_forward(self, feature: Tensor, bp: BlockParams) -> Tensor:
        return self.block_internals(feature, bp)["out"]

    def forward_with_params(self, content: Tensor, blocks: list[BlockParams]) -> Tensor:
        x = self.encode(content)
        for bp in blocks:
            x = self.block_forward(x, bp)
        return self.decode(x)

    def forward(self, content: Tensor, f: Tensor) -> Tensor:
        """Differentiable stylization: decode(blocks(encode(content), f))."""
        return self.forward_with_params(content, self.adapted_params(f))

    # -- inference conveniences -----------------------------------------------

    def stylize_array(self, image: np.ndarray, values: np.ndarray,
                      cache: dict | None = None) -> np.ndarray:
        """Stylize a (3, h, w) float image without recording gradients.

        ``cache`` maps style-vector bytes to adapted parameters; hits are
        bit-identical to recomputation, so caching never changes output.
        """
        values = np.asarray(values, dtype=self.dtype)
        with ag.no_grad():
            if cache is None:
                blocks = self.adapted_params(Tensor(values))
            else:
                key = values.tobytes()
                blocks = cache.get(key)
                if blocks is None:
                    blocks = self.adapted_params(Tensor(values))
                    cache[key] = blocks
            out = self.forward_with_params(Tensor(np.asarray(image, dtype=self.dtype)), blocks)
        return out.data

    def stylize_any_size(self, image: np.ndarray, values: np.ndarray,
                         cache: dict | None = None) -> np.ndarray:
        """Reflect-pad to a multiple of 4, stylize, crop back."""
        _, h, w = image.shape
        ph, pw = (-h) % 4, (-w) % 4
        if ph or pw:
            padded = np.pad(image, ((0, 0), (0, ph), (0, pw)), mode="reflect")
        else:
            padded = image
        out = self.stylize_array(padded, values, cache)
        return out[:, :h, :w]


# ---------------------------------------------------------------------------
# efficiency accounting
# ---------------------------------------------------------------------------

def _prod(shape) -> int:
    n = 1
    for s in shape:
        n *= int(s)
    return n


def per_style_adapted_count(config: NetworkConfig) -> int:
    kw, kh = config.sconv_kernel
    c3 = config.feature_channels
    return config.sab_count * (c3 * kw * kh + 3 * c3)


def conv_flops(c_in: int, c_out: int, k: int, h_out: int, w_out: int) -> int:
    """Multiply-accumulate count of one convolution, 2 ops per MAC."""
    return 2 * k * k * c_in * c_out * h_out * w_out


def accounting(config: NetworkConfig, input_size: tuple[int, int] = (512, 512)) -> dict:
    """Analytic parameter and FLOP counts for one stylization pass.

    ``params_total`` counts every stored parameter including the MLP heads.
    ``params_oip`` counts only what one per-style inference touches:
    encoder + decoder weights plus the adapted per-style parameters; the
    heads run once per style and their outputs are cacheable, so they are
    excluded and their FLOPs amortize to zero. Convolutions count
    2*k^2*c_in*c_out*h_out*w_out; normalization and pointwise stages count
    their per-element op totals.
    """
    h, w = input_size
    c1, c2, c3 = config.encoder_channels
    shapes = parameter_shapes(config)
    params_total = sum(_prod(s) for s, _ in shapes.values())
    params_coder = sum(_prod(s) for name, (s, _) in shapes.items()
                       if name.startswith(("enc", "dec")))
    params_oip = params_coder + per_style_adapted_count(config)

    k0, km = config.io_kernel, config.mid_kernel
    kw, kh = config.sconv_kernel
    flops = 0
    flops += conv_flops(3, c1, k0, h, w)
    flops += conv_flops(c1, c2, km, h // 2, w // 2)
    flops += conv_flops(c2, c3, km, h // 4, w // 4)
    hw4 = (h // 4) * (w // 4)
    # per block: depthwise conv, then normalization (7 ops/elt: two stat
    # passes, subtract, divide, scale, shift) and pointwise fusion
    # (gate mul, add, relu, residual add: 4 ops/elt)
    per_block = 2 * kw * kh * c3 * hw4 + 11 * c3 * hw4
    flops += config.sab_count * per_block
    flops += conv_flops(c3, c2, km, h // 4, w // 4)
    flops += conv_flops(c2, c1, km, h // 2, w // 2)
    flops += conv_flops(c1, 3, k0, h, w)
    flops += 4 * 3 * h * w  # output sigmoid
    return {
        "params_total": params_total,
        "params_oip": params_oip,
        "params_coder": params_coder,
        "per_style_adapted": per_style_adapted_count(config),
        "per_style_stored_floats": config.style_dim,
        "flops": flops,
        "input_size": (h, w),
    }
