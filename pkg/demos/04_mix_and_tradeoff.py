#!/usr/bin/env python3
"""Style interpolation and the content-style trade-off knob, rendered as
PNG strips in ./out/. Uses an untrained model for speed; swap in a trained
model.sta to see it properly."""

import numpy as np

from styleshift.codebook import StyleCodebook, StyleRepresentation, resolve_blend
from styleshift.network import NetworkConfig, Stylizer
from styleshift.storage import save_image
from styleshift.synthetic import content_image

import os
os.makedirs("out", exist_ok=True)

model = Stylizer.initialize(NetworkConfig(), seed=11)
cb = StyleCodebook(style_dim=16, network_fingerprint=model.fingerprint())
rng = np.random.default_rng(3)
cb.add(StyleRepresentation("warm", "warm", rng.uniform(-1.5, 1.5, 16).astype(np.float32)))
cb.add(StyleRepresentation("cool", "cool", rng.uniform(-1.5, 1.5, 16).astype(np.float32)))

content = content_image(seed=3, index=1, size=64)
cache = {}

print("interpolation strip warm -> cool at w in {0, 0.25, 0.5, 0.75, 1}:")
strip = []
for w in (0.0, 0.25, 0.5, 0.75, 1.0):
    values, _ = resolve_blend(cb, [("warm", 1.0 - w), ("cool", w)], alpha=1.0)
    strip.append(model.stylize_array(content, values, cache))
    print(f"  w={w:4.2f}: blended code head = {values[:4].round(3)}")
save_image("out/interpolation_strip.png", np.concatenate(strip, axis=2))

print()
print("content-style trade-off, alpha in {0, 0.5, 1} against style 'warm':")
strip = []
for alpha in (0.0, 0.5, 1.0):
    values, _ = resolve_blend(cb, [("warm", 1.0)], alpha=alpha)
    strip.append(model.stylize_array(content, values, cache))
    print(f"  alpha={alpha:3.1f}: code head = {values[:4].round(3)}")
save_image("out/tradeoff_strip.png", np.concatenate(strip, axis=2))

print()
print("alpha=0 resolves to the identity entry exactly, so it reproduces the")
print("reconstruction path bit for bit; alpha=1 is plain stylization")
print("wrote out/interpolation_strip.png and out/tradeoff_strip.png")
