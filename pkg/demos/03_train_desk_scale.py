#!/usr/bin/env python3
"""A miniature end-to-end training run: 2 styles, 300 iterations, the
hermetic test backbone. Writes model + codebook + stylized samples to
./out/desk_run/. Takes a minute or two on a laptop."""

import numpy as np

from styleshift.backbone import toy_backbone
from styleshift.losses import psnr
from styleshift.network import NetworkConfig, Stylizer
from styleshift.storage import save_image
from styleshift.synthetic import content_pool, style_pool
from styleshift.training import TrainConfig, train_general

cfg = TrainConfig(iterations=300, batch_size=2, content_crop=32, style_size=64,
                  lr_halve_every=100, checkpoint_every=150, seed=7)
model = Stylizer.initialize(NetworkConfig(encoder_channels=(8, 16, 32), mlp_hidden=32),
                            seed=cfg.seed)
backbone = toy_backbone()
contents = content_pool(cfg.seed, 6, size=48)
styles = style_pool(cfg.seed, 2, size=cfg.style_size)

print(f"training {cfg.iterations} iterations, batch {cfg.batch_size}, "
      f"{len(styles)} styles, {len(contents)} contents")
codebook, report = train_general(cfg, contents, styles, model, backbone,
                                 out_dir="out/desk_run")

for lo in range(0, cfg.iterations, 100):
    block = report.records[lo:lo + 100]
    mean = float(np.mean([r["total"] for r in block]))
    print(f"  iterations {lo:3d}-{lo + 100:3d}: mean total loss {mean:8.3f}")
print(f"wall clock: {report.wall_clock_s:.1f}s; "
      f"loss {report.mean_total(0, 50):.2f} -> {report.mean_total(-50, None):.2f}")

probe = contents[0][:, :32, :32]
recon = model.stylize_array(probe, codebook.identity.values)
print(f"reconstruction psnr on a training crop: {psnr(recon, probe):.1f} dB")
save_image("out/desk_run/probe_content.png", probe)
save_image("out/desk_run/probe_recon.png", recon)
for sid in styles:
    out = model.stylize_array(probe, codebook.get(sid).values)
    save_image(f"out/desk_run/probe_{sid}.png", out)
print("wrote out/desk_run/ (model.sta, codebook.json, train_log.jsonl, probes)")
