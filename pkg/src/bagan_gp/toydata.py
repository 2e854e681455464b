"""Synthetic desk-scale dataset of visually similar classes.

Four classes of 64x64 grayscale shapes that share a common base form (a
filled disc) and differ only in small localized features. The class
imbalance (500/50/50/100 by default) mirrors a majority class with small
pathological minorities, which is the regime the training pipeline
targets.
"""

from __future__ import annotations

import numpy as np

from .data import ImageBatch, LabelBatch, RANGE_RAW

DEFAULT_COUNTS = (500, 50, 50, 100)


def _draw_disc(img, cx, cy, radius, value):
    yy, xx = np.mgrid[0:img.shape[0], 0:img.shape[1]]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    img[mask] = value


def _render(class_index, rng: np.random.Generator) -> np.ndarray:
    img = np.full((64, 64), 30.0)
    img += rng.normal(0, 4, size=img.shape)
    cx = 32 + rng.integers(-4, 5)
    cy = 32 + rng.integers(-4, 5)
    radius = 18 + rng.integers(-3, 4)
    _draw_disc(img, cx, cy, radius, 140.0)
    if class_index == 1:
        # small bright square near the upper-left rim
        sx, sy = cx - radius // 2, cy - radius // 2
        img[sy - 3:sy + 3, sx - 3:sx + 3] = 250.0
    elif class_index == 2:
        # dark bar through the center
        img[cy - 2:cy + 3, cx - radius + 2:cx + radius - 2] = 5.0
    elif class_index == 3:
        # two dark dots along the lower half
        for dx in (-radius // 2, radius // 2):
            _draw_disc(img, cx + dx, cy + radius // 2, 4, 5.0)
    return np.clip(img, 0, 255)


def make_similar_shapes_dataset(counts=DEFAULT_COUNTS, seed=0) -> tuple[ImageBatch, LabelBatch]:
    """Raw uint8 dataset; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for class_index, count in enumerate(counts):
        for _ in range(count):
            images.append(_render(class_index, rng))
        labels.extend([class_index] * count)
    data = np.stack(images).astype(np.uint8)[:, :, :, None]
    return (
        ImageBatch(data, RANGE_RAW),
        LabelBatch(np.asarray(labels, dtype=np.int64), num_classes=len(counts)),
    )
