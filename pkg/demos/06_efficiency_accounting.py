#!/usr/bin/env python3
"""Analytic parameter and FLOP accounting for the shipped full-size
config, next to its budget, plus a measured CPU stylize latency."""

import time

import numpy as np

from styleshift.configs import paper_scale
from styleshift.network import Stylizer, accounting

pinned = paper_scale()
acc = accounting(pinned.network, (512, 512))

print(f"config {pinned.name!r} at 512x512")
print(f"  params total : {acc['params_total'] / 1e6:6.3f} M  (budget {pinned.budget['params_m']} M)")
print(f"  params OIP   : {acc['params_oip'] / 1e6:6.3f} M  (budget {pinned.budget['oip_m']} M)")
print(f"  FLOPs        : {acc['flops'] / 1e9:6.2f} G  (budget {pinned.budget['flops_g']} G)")
print(f"  per new style: {acc['per_style_stored_floats']} stored floats")
print()
print("OIP = encoder + decoder + the adapted per-style parameters; the MLP")
print("heads run once per style and cache, so they amortize out of inference")
print()

model = Stylizer.initialize(pinned.network, seed=0)
img = np.full((3, 256, 256), 0.5, dtype=np.float32)
values = np.ones(16, dtype=np.float32)
cache = {}
model.stylize_array(img, values, cache)  # warm the cache
t0 = time.perf_counter()
model.stylize_array(img, values, cache)
ms = (time.perf_counter() - t0) * 1e3
print(f"measured stylize at 256x256 (cached style): {ms:.0f} ms on this machine")
print("(the 512x512 figure is printed by `styleshift info --config paper-scale --latency`)")
