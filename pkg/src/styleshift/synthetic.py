"""Procedural content and style images for demos, tests, and pilot runs.

Everything derives from the named Philox streams, so a (seed, index) pair
always yields the same image on any platform. Content images are smooth
gradients with a few soft shapes; style images are strongly colored
periodic textures whose channel statistics differ clearly per style.
"""

from __future__ import annotations

import numpy as np

from . import rng


def _coords(size: int):
    axis = np.linspace(0.0, 1.0, size, dtype=np.float32)
    return np.meshgrid(axis, axis, indexing="ij")


def content_image(seed: int, index: int, size: int = 96) -> np.ndarray:
    """A smooth (3, size, size) image in [0.08, 0.92]."""
    gen = rng.stream(seed, "synth-content", str(index))
    yy, xx = _coords(size)
    img = np.empty((3, size, size), dtype=np.float32)
    for c in range(3):
        a, b = gen.uniform(-0.5, 0.5, 2)
        img[c] = 0.5 + a * (xx - 0.5) + b * (yy - 0.5)
    for _ in range(int(gen.integers(2, 5))):
        cx, cy = gen.uniform(0.15, 0.85, 2)
        radius = gen.uniform(0.08, 0.3)
        color = gen.uniform(-0.35, 0.35, 3).astype(np.float32)
        bump = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * radius ** 2))).astype(np.float32)
        img += color[:, None, None] * bump
    return np.clip(img, 0.08, 0.92)


def style_image(seed: int, index: int, size: int = 128) -> np.ndarray:
    """A textured (3, size, size) image with a distinct palette."""
    gen = rng.stream(seed, "synth-style", str(index))
    yy, xx = _coords(size)
    kind = index % 3
    if kind == 0:  # angled stripes
        angle = gen.uniform(0, np.pi)
        freq = gen.uniform(6, 18)
        phase = gen.uniform(0, 2 * np.pi)
        t = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
    elif kind == 1:  # soft checkerboard
        freq = gen.uniform(3, 9)
        t = 0.5 + 0.5 * np.sin(2 * np.pi * freq * xx) * np.sin(2 * np.pi * freq * yy)
    else:  # blotches: low-frequency noise upsampled
        cells = int(gen.integers(4, 9))
        coarse = gen.uniform(0, 1, (cells, cells)).astype(np.float32)
        reps = int(np.ceil(size / cells))
        t = np.kron(coarse, np.ones((reps, reps), dtype=np.float32))[:size, :size]
    t = t.astype(np.float32)
    color_a = gen.uniform(0.05, 0.95, 3).astype(np.float32)
    color_b = gen.uniform(0.05, 0.95, 3).astype(np.float32)
    img = color_a[:, None, None] * t + color_b[:, None, None] * (1.0 - t)
    noise = gen.normal(0, 0.02, (3, size, size)).astype(np.float32)
    return np.clip(img + noise, 0.0, 1.0)


def smooth_content_image(seed: int, index: int, size: int = 160) -> np.ndarray:
    """Like content_image but gentler: flatter gradients, wider bumps.

    The desk-scale training experiment uses these; reconstruction quality is
    measured against them, so their spectrum is deliberately tame.
    """
    gen = rng.stream(seed, "synth-content-smooth", str(index))
    yy, xx = _coords(size)
    img = np.empty((3, size, size), dtype=np.float32)
    for c in range(3):
        a, b = gen.uniform(-0.35, 0.35, 2)
        img[c] = 0.5 + a * (xx - 0.5) + b * (yy - 0.5)
    for _ in range(int(gen.integers(2, 4))):
        cx, cy = gen.uniform(0.2, 0.8, 2)
        radius = gen.uniform(0.15, 0.4)
        color = gen.uniform(-0.2, 0.2, 3).astype(np.float32)
        bump = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * radius ** 2))).astype(np.float32)
        img += color[:, None, None] * bump
    return np.clip(img, 0.15, 0.85)


def content_pool(seed: int, count: int, size: int = 96) -> list[np.ndarray]:
    return [content_image(seed, i, size) for i in range(count)]


def style_pool(seed: int, count: int, size: int = 128) -> dict[str, np.ndarray]:
    return {f"style{i:02d}": style_image(seed, i, size) for i in range(count)}


def soft_style_pool(seed: int, count: int, size: int = 128,
                    squeeze: float = 0.5) -> dict[str, np.ndarray]:
    """Style textures with their palette compressed toward mid-gray."""
    return {sid: (0.5 + squeeze * (img - 0.5)).astype(np.float32)
            for sid, img in style_pool(seed, count, size).items()}
