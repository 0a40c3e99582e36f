#!/usr/bin/env python3
"""A tour of the tensor core: forward ops, backward rules, and a finite-
difference spot check of the composed graph."""

import numpy as np

from styleshift import autograd as ag
from styleshift.autograd import Parameter, Tensor

print("== a tiny convolution with gradients ==")
rng = np.random.default_rng(0)
x = Tensor(rng.uniform(-1, 1, (2, 5, 5)).astype(np.float64))
w = Parameter(rng.uniform(-1, 1, (3, 2, 3, 3)), "w")
b = Parameter(np.zeros(3), "b")

y = ag.conv2d(x, w, b, stride=1, padding=1)
print(f"input {x.shape} -> conv output {y.shape}")

loss = ag.sum_(ag.mul(y, y))
ag.backward(loss)
print(f"loss = {loss.item():.4f}; gradient filled for {w.name}: shape {w.grad.shape}")

print()
print("== checking one weight against central differences ==")
h = 1e-6
keep = w.data[0, 0, 0, 0]
with ag.no_grad():
    w.data[0, 0, 0, 0] = keep + h
    up = ag.sum_(ag.mul(ag.conv2d(x, w, b, 1, 1), ag.conv2d(x, w, b, 1, 1))).item()
    w.data[0, 0, 0, 0] = keep - h
    dn = ag.sum_(ag.mul(ag.conv2d(x, w, b, 1, 1), ag.conv2d(x, w, b, 1, 1))).item()
    w.data[0, 0, 0, 0] = keep
numeric = (up - dn) / (2 * h)
print(f"analytic {w.grad[0, 0, 0, 0]:+.8f}  numeric {numeric:+.8f}")

print()
print("== dynamic depthwise kernels receive gradients too ==")
k = Parameter(rng.uniform(-1, 1, (2, 1, 3, 3)), "kernels")
out = ag.depthwise_conv2d_dynamic(x, k, groups=2)
ag.backward(ag.sum_(ag.mul(out, out)))
print(f"kernel cotangent norm: {np.linalg.norm(k.grad):.4f}")
print("this is the path that trains the hypernetwork heads")

print()
print("== instance normalization postcondition ==")
feat = Tensor(rng.uniform(-2, 2, (4, 6, 6)))
normed, mu, sd = ag.instance_norm(feat, eps=1e-5)
print(f"channel means after norm: {np.abs(normed.data.mean(axis=(1, 2))).max():.2e}")
print(f"channel stds  after norm: {normed.data.std(axis=(1, 2))}")
