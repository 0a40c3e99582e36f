#!/usr/bin/env python3
"""Convert a torchvision VGG-16 checkpoint into a styleshift tensor archive.

Usage:
    python tools/convert_vgg16.py vgg16-397923af.pth vgg16.sta

The input is the standard torchvision state dict (download it once with
torchvision or grab the published .pth); this script only needs torch for
deserialization. The output archive feeds `--backbone` on the CLI and
`styleshift.backbone.vgg16_from_archive`. Layer mapping and preprocessing
constants are documented in docs/formats.md.
"""

import sys

sys.path.insert(0, "src")

from styleshift.backbone import IMAGENET_MEAN, IMAGENET_STD, VGG16_LAYERS
from styleshift.storage import save_archive

# torchvision features.* indices for the 13 conv layers, in stack order
TORCHVISION_INDICES = [0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28]


def main(src: str, dst: str) -> int:
    import torch

    state = torch.load(src, map_location="cpu", weights_only=True)
    conv_names = [spec[1] for spec in VGG16_LAYERS if spec[0] == "conv"]
    tensors = {}
    for name, idx in zip(conv_names, TORCHVISION_INDICES):
        tensors[f"{name}.w"] = state[f"features.{idx}.weight"].numpy()
        tensors[f"{name}.b"] = state[f"features.{idx}.bias"].numpy()
    digest = save_archive(tensors, dst, {
        "label": "vgg16-torchvision",
        "preprocess_mean": ",".join(str(v) for v in IMAGENET_MEAN),
        "preprocess_std": ",".join(str(v) for v in IMAGENET_STD),
    })
    print(f"wrote {dst} ({len(tensors)} tensors, digest {digest[:16]}...)")
    return 0


if __name__ == "__main__":
    if len(sys.argv) != 3:
        print(__doc__)
        sys.exit(1)
    sys.exit(main(sys.argv[1], sys.argv[2]))
