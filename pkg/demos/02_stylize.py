#!/usr/bin/env python3
"""Build a generator, stylize a synthetic content image with a few style
codes, and write the PNGs to ./out/."""

import os

import numpy as np

from styleshift.network import NetworkConfig, Stylizer
from styleshift.storage import save_image
from styleshift.synthetic import content_image

os.makedirs("out", exist_ok=True)

config = NetworkConfig()  # 16-float styles, 3 style-aware blocks
model = Stylizer.initialize(config, seed=42)
print(f"generator: channels {config.encoder_channels}, {config.sab_count} blocks, "
      f"{sum(p.size for p in model.parameters()):,} parameters")

content = content_image(seed=42, index=0, size=96)
save_image("out/content.png", content)

rng = np.random.default_rng(7)
cache = {}
for i in range(3):
    values = rng.uniform(-1.5, 1.5, config.style_dim).astype(np.float32)
    out = model.stylize_array(content, values, cache)
    save_image(f"out/stylized_{i}.png", out)
    print(f"style {i}: 16 floats -> out/stylized_{i}.png "
          f"(output range [{out.min():.3f}, {out.max():.3f}])")

print()
print("the model is untrained, so these are random-but-valid stylizations;")
print("run 03_train_desk_scale.py to train a small one for real")
print(f"adapted-parameter cache now holds {len(cache)} styles; hits are bit-identical")
