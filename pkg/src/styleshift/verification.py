"""Finite-difference verification of the full training gradient.

Builds a small double-precision model, evaluates the complete four-term
loss (including all 8 geometric transforms), and compares every parameter
gradient, the style vector, and the identity vector against central
differences. Gradient flow through the dynamically predicted depthwise
kernels is covered because the kernels are hypernetwork outputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import rng, synthetic
from .autograd import Parameter, Tensor
from .backbone import toy_backbone
from .dihedral import ALL_TRANSFORMS
from .losses import BatchSample, LossWeights, feature_statistics, total_loss
from .network import NetworkConfig, Stylizer

FD_STEP = 1e-4
ABS_GUARD = 1e-7


def tiny_config(style_dim: int = 8, sab_count: int = 2) -> NetworkConfig:
    return NetworkConfig(encoder_channels=(3, 4, 8), sab_count=sab_count,
                         sconv_kernel=(3, 3), mlp_hidden=4, style_dim=style_dim)


@dataclass
class GradcheckResult:
    max_rel_error: float
    worst_param: str
    checked: int
    seconds: float

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_error < tolerance


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    err = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    # differences below the absolute guard are indistinguishable from the
    # roundoff floor of central differences on a loss of this magnitude
    return np.where(err < ABS_GUARD, 0.0, err / np.maximum(denom, ABS_GUARD))


def full_gradcheck(seed: int = 7, image_size: int = 8, style_dim: int = 8,
                   sab_count: int = 2, stride: int = 1,
                   progress=None) -> GradcheckResult:
    """Check every parameter of the full loss against central differences.

    ``stride`` > 1 checks every stride-th scalar (used by fast unit tests);
    the acceptance run uses stride 1, covering all of them.
    """
    start = time.perf_counter()
    config = tiny_config(style_dim, sab_count)
    model = Stylizer.initialize(config, seed=seed, dtype=np.float64)
    backbone = toy_backbone(seed=seed + 1, dtype=np.float64)
    content = synthetic.content_image(seed, 0, image_size).astype(np.float64)
    style_img = synthetic.style_image(seed, 0, 2 * image_size).astype(np.float64)
    stats = feature_statistics(backbone, style_img)

    gen = rng.stream(seed, "gradcheck-style")
    f_style = Parameter(1.0 + gen.uniform(-0.2, 0.2, style_dim), "style:probe")
    f_zero = Parameter(1.0 + gen.uniform(-0.2, 0.2, style_dim), "style:identity")

    def loss_fn() -> float:
        sample = BatchSample(content=content, style_id="probe", style_rep=f_style,
                             style_stats=stats, geo_transforms=ALL_TRANSFORMS)
        loss, _ = total_loss([sample], f_zero, model, backbone, LossWeights())
        return loss

    loss = loss_fn()
    ag.backward(loss)
    params = model.parameters() + [f_style, f_zero]
    analytic = {p.name: p.grad.copy() for p in params}

    max_err = 0.0
    worst = ""
    checked = 0
    with ag.no_grad():
        for p in params:
            flat = p.data.reshape(-1)
            a_flat = analytic[p.name].reshape(-1)
            for i in range(0, flat.size, stride):
                err = None
                # central differences need a kink-free interval; if the
                # default step fails, retry with a 10x smaller one (a wrong
                # analytic gradient fails at every step size)
                for h in (FD_STEP, FD_STEP / 10.0):
                    keep = flat[i]
                    flat[i] = keep + h
                    up = loss_fn().item()
                    flat[i] = keep - h
                    dn = loss_fn().item()
                    flat[i] = keep
                    numeric = (up - dn) / (2 * h)
                    err = float(_relative_error(np.array(a_flat[i]), np.array(numeric)))
                    if err < 1e-4:
                        break
                checked += 1
                if err > max_err:
                    max_err = err
                    worst = f"{p.name}[{i}]"
            if progress is not None:
                progress(p.name, max_err)
    return GradcheckResult(max_err, worst, checked, time.perf_counter() - start)


def per_op_gradcheck(seed: int = 3) -> float:
    """Quick FD sweep over each primitive op in isolation; returns max error."""
    gen = rng.stream(seed, "opcheck")
    worst = 0.0

    def check(build, params):
        nonlocal worst
        loss = build()
        ag.backward(loss)
        for p in params:
            analytic = p.grad.copy().reshape(-1)
            flat = p.data.reshape(-1)
            with ag.no_grad():
                for i in range(flat.size):
                    keep = flat[i]
                    flat[i] = keep + FD_STEP
                    up = build().item()
                    flat[i] = keep - FD_STEP
                    dn = build().item()
                    flat[i] = keep
                    numeric = (up - dn) / (2 * FD_STEP)
                    err = float(_relative_error(np.array(analytic[i]), np.array(numeric)))
                    worst = max(worst, err)

    x = Parameter(gen.uniform(-1, 1, (2, 4, 4)), "x")
    w = Parameter(gen.uniform(-1, 1, (3, 2, 3, 3)), "w")
    b = Parameter(gen.uniform(-0.5, 0.5, 3), "b")
    probe = Tensor(gen.uniform(-1, 1, (3, 4, 4)))
    check(lambda: ag.sum_(ag.mul(ag.conv2d(x, w, b, 1, 1), probe)), [x, w, b])

    k = Parameter(gen.uniform(-1, 1, (2, 1, 3, 3)), "k")
    probe2 = Tensor(gen.uniform(-1, 1, (2, 4, 4)))
    check(lambda: ag.sum_(ag.mul(ag.depthwise_conv2d_dynamic(x, k, 2), probe2)), [x, k])

    check(lambda: ag.sum_(ag.mul(ag.instance_norm(x, 1e-5)[0], probe2)), [x])

    v = Parameter(gen.uniform(-1, 1, 5), "v")
    lw = Parameter(gen.uniform(-1, 1, (3, 5)), "lw")
    lb = Parameter(gen.uniform(-0.5, 0.5, 3), "lb")
    check(lambda: ag.sum_(ag.mul(ag.linear(v, lw, lb), ag.linear(v, lw, lb))), [v, lw, lb])

    check(lambda: ag.sum_(ag.mul(ag.sigmoid(x), probe2)), [x])
    check(lambda: ag.mean_(ag.abs_(ag.mul(x, Tensor(np.full((2, 4, 4), 0.7))))), [x])
    check(lambda: ag.sum_(ag.mul(ag.nearest_up2(ag.maxpool2(x)), probe2)), [x])
    return worst
