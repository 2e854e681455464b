"""Dataset loading, per-class imbalance schedules, and preprocessing.

Batches are immutable value objects holding numpy arrays in NHWC layout.
Raw batches carry uint8-range pixels; scaled batches live in [-1, 1], which
is the network input/output domain (tanh generator output).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    AlreadyScaled,
    LabelMismatch,
    MissingSource,
    TargetExceedsAvailable,
    UndecodableImage,
)

IMAGE_SIZE = 64

RANGE_RAW = "raw_0_255"
RANGE_SCALED = "scaled_minus1_1"

_IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class ImageBatch:
    """Rank-4 image array (N, H, W, C) with an explicit value-range tag."""

    data: np.ndarray
    range_tag: str = RANGE_RAW

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ValueError(f"expected rank-4 array, got shape {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ValueError("empty batch")
        if self.range_tag not in (RANGE_RAW, RANGE_SCALED):
            raise ValueError(f"unknown range_tag {self.range_tag!r}")

    def __len__(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return self.data.shape[3]


@dataclass(frozen=True)
class LabelBatch:
    """Integer class labels aligned with an image or latent batch."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ValueError("labels must be a flat integer array")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(
                f"labels outside [0, {self.num_classes}): "
                f"range [{labels.min()}, {labels.max()}]"
            )

    def __len__(self):
        return self.labels.shape[0]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    class_names: list[str]
    image_shape: tuple[int, int, int]
    source: str

    def __post_init__(self):
        # an empty list means "infer the class count from the labels"
        if len(self.class_names) == 1:
            raise ValueError("need at least 2 classes (or none, to infer)")
        h, w, c = self.image_shape
        if c not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {c}")


@dataclass(frozen=True)
class ImbalanceSchedule:
    """Exact per-class target counts plus the subsampling seed."""

    per_class_target: dict[int, int]
    seed: int = 0

    def __post_init__(self):
        for k, n in self.per_class_target.items():
            if n < 1:
                raise ValueError(f"class {k}: target count {n} < 1")


def load_dataset(spec: DatasetSpec) -> tuple[ImageBatch, LabelBatch]:
    """Load every sample from the source as raw uint8 images with labels.

    Two source layouts: a directory of per-class subfolders (class index =
    sorted position of the folder name), or a .npz container with "images"
    and "labels" arrays. Container labels win over folder structure.
    """
    path = Path(spec.source)
    if not path.exists():
        raise MissingSource(f"source not found: {path}")
    if path.is_file():
        images, labels = _load_container(path)
    else:
        images, labels = _load_folder_tree(path)
    if images.shape[0] != labels.shape[0]:
        raise LabelMismatch(images.shape[0], labels.shape[0])
    num_classes = len(spec.class_names) or int(labels.max()) + 1
    return (
        ImageBatch(images, RANGE_RAW),
        LabelBatch(labels.astype(np.int64), num_classes),
    )


def _load_container(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with np.load(path) as archive:
        if "images" not in archive or "labels" not in archive:
            raise MissingSource(f"container {path} lacks 'images'/'labels' arrays")
        return archive["images"], archive["labels"]


def _load_folder_tree(root: Path) -> tuple[np.ndarray, np.ndarray]:
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise MissingSource(f"no class subdirectories under {root}")
    images, labels = [], []
    for index, class_dir in enumerate(class_dirs):
        for file in sorted(class_dir.iterdir()):
            if file.suffix.lower() not in _IMAGE_EXTENSIONS:
                continue
            decoded = cv2.imread(str(file), cv2.IMREAD_UNCHANGED)
            if decoded is None:
                raise UndecodableImage(str(file))
            if decoded.ndim == 2:
                decoded = decoded[:, :, None]
            elif decoded.shape[2] == 3:
                decoded = cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB)
            elif decoded.shape[2] == 4:
                decoded = cv2.cvtColor(decoded, cv2.COLOR_BGRA2RGB)
            images.append(decoded)
            labels.append(index)
    if not images:
        raise MissingSource(f"no decodable images under {root}")
    return np.stack(images), np.asarray(labels, dtype=np.int64)


def apply_schedule(
    images: ImageBatch, labels: LabelBatch, sched: ImbalanceSchedule
) -> tuple[ImageBatch, LabelBatch]:
    """Seeded per-class uniform subsample down to the schedule's exact counts.

    Selection order is (class 0 picks, class 1 picks, ...), each class's picks
    kept in original dataset order, so equal seeds give identical outputs and
    re-applying a schedule to its own output is the identity.
    """
    rng = np.random.default_rng(sched.seed)
    keep = []
    label_array = labels.labels
    for class_index in sorted(sched.per_class_target):
        target = sched.per_class_target[class_index]
        candidates = np.flatnonzero(label_array == class_index)
        if target > candidates.size:
            raise TargetExceedsAvailable(class_index, target, candidates.size)
        chosen = rng.choice(candidates, size=target, replace=False)
        keep.append(np.sort(chosen))
    order = np.concatenate(keep)
    return (
        ImageBatch(images.data[order], images.range_tag),
        LabelBatch(label_array[order], labels.num_classes),
    )


def preprocess(images: ImageBatch) -> ImageBatch:
    """Bilinear-resize to 64x64 and map pixel values into [-1, 1]."""
    if images.range_tag != RANGE_RAW:
        raise AlreadyScaled("preprocess expects a raw batch")
    n, h, w, c = images.data.shape
    if (h, w) != (IMAGE_SIZE, IMAGE_SIZE):
        resized = np.empty((n, IMAGE_SIZE, IMAGE_SIZE, c), dtype=np.float32)
        for i in range(n):
            out = cv2.resize(
                images.data[i].astype(np.float32),
                (IMAGE_SIZE, IMAGE_SIZE),
                interpolation=cv2.INTER_LINEAR,
            )
            resized[i] = out[:, :, None] if out.ndim == 2 else out
    else:
        resized = images.data.astype(np.float32)
    scaled = resized / 127.5 - 1.0
    return ImageBatch(scaled, RANGE_SCALED)


def inverse_scale(images: ImageBatch) -> ImageBatch:
    """Map a scaled batch back to uint8 pixels."""
    if images.range_tag != RANGE_SCALED:
        raise ValueError("inverse_scale expects a scaled batch")
    raw = np.clip((images.data + 1.0) * 127.5, 0, 255)
    return ImageBatch(np.round(raw).astype(np.uint8), RANGE_RAW)


# --- external file formats ---

def save_container(path, images: ImageBatch, labels: LabelBatch):
    """Write the tensor-container format: uint8 images + int64 labels."""
    data = images.data
    if images.range_tag == RANGE_RAW:
        data = data.astype(np.uint8)
    else:
        data = inverse_scale(images).data
    np.savez(path, images=data, labels=labels.labels.astype(np.int64))


def load_schedule_file(path) -> ImbalanceSchedule:
    """Parse the key-value schedule format: "class_index = count" lines plus
    a "seed = <int>" line."""
    path = Path(path)
    if not path.exists():
        raise MissingSource(f"schedule file not found: {path}")
    targets: dict[int, int] = {}
    seed = 0
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "seed":
            seed = int(value)
        else:
            targets[int(key)] = int(value)
    return ImbalanceSchedule(per_class_target=targets, seed=seed)


def save_schedule_file(path, sched: ImbalanceSchedule):
    lines = [f"seed = {sched.seed}"]
    for k in sorted(sched.per_class_target):
        lines.append(f"{k} = {sched.per_class_target[k]}")
    Path(path).write_text("\n".join(lines) + "\n")
