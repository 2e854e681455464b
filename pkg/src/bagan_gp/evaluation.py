"""Evaluation: FID with pluggable feature extractors, conditional image
grids, latent-dispersion diagnostics, and real-vs-generated feature
projections.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import ImageBatch, LabelBatch, RANGE_SCALED, inverse_scale
from .errors import (
    ComplexResidual,
    DimMismatch,
    EmptyClassInValidation,
    ExtractorUnavailable,
    MissingRealExample,
    SingleClass,
    TooFewSamples,
)
from .networks import images_to_tensor, tensor_to_images


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int


def compute_stats(features: np.ndarray) -> FeatureStats:
    """Sample mean and covariance (denominator N-1) of an (N, F) array."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise TooFewSamples(f"need an (N>=2, F) feature array, got {features.shape}")
    return FeatureStats(
        mean=features.mean(axis=0),
        cov=np.cov(features, rowvar=False).reshape(features.shape[1], features.shape[1]),
        count=features.shape[0],
    )


def _sqrt_psd(matrix, tol):
    vals, vecs = np.linalg.eigh((matrix + matrix.T) / 2)
    if vals.min() < -tol:
        raise ComplexResidual(
            f"matrix square root failed: eigenvalue {vals.min():.3e} below -{tol:.3e}"
        )
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def fid(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The cross-term square root goes through sqrt(S_a) S_b sqrt(S_a), which
    is symmetric PSD up to round-off, so an eigendecomposition suffices;
    negative residuals beyond 1e-6 of the matrix scale are an error.
    """
    if a.mean.shape != b.mean.shape:
        raise DimMismatch(f"feature dims differ: {a.mean.shape} vs {b.mean.shape}")
    scale = max(np.linalg.norm(a.cov), np.linalg.norm(b.cov), 1.0)
    tol = 1e-6 * scale
    sqrt_a = _sqrt_psd(a.cov, tol)
    inner = sqrt_a @ b.cov @ sqrt_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2)
    if vals.min() < -tol * scale:
        raise ComplexResidual(
            f"cross-term eigenvalue {vals.min():.3e} too negative"
        )
    trace_sqrt = np.sqrt(np.clip(vals, 0, None)).sum()
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2 * trace_sqrt)
    if value < -max(tol, 1e-8):
        raise ComplexResidual(f"FID evaluated to {value:.3e}")
    return max(value, 0.0)


# --- feature extractors ---

class FeatureExtractor:
    """Deterministic map ImageBatch -> (N, F) feature array."""

    extractor_id = "abstract"

    def __call__(self, images: ImageBatch) -> np.ndarray:
        raise NotImplementedError


class _SmallConvNet(nn.Module):
    def __init__(self, channels, num_classes, width=32):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(channels, width, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(width, 2 * width, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(2 * width, 4 * width, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(1),
        )
        self.classifier = nn.Linear(4 * width, num_classes)

    def forward(self, x):
        return self.classifier(self.features(x).flatten(1))


class SmallConvExtractor(FeatureExtractor):
    """Self-contained extractor: a small classifier trained on the
    evaluation dataset's training split; features come from the pooled
    conv output (the layer before the class logits)."""

    def __init__(self, net: _SmallConvNet, extractor_id="smallconv"):
        self.net = net
        self.net.eval()
        self.extractor_id = extractor_id

    @classmethod
    def train_on(cls, images: ImageBatch, labels: LabelBatch, epochs=10,
                 batch_size=128, lr=1e-3, seed=0, width=32):
        torch.manual_seed(seed)
        net = _SmallConvNet(images.channels, labels.num_classes, width)
        x_all = images_to_tensor(images)
        y_all = torch.as_tensor(labels.labels, dtype=torch.long)
        optimizer = torch.optim.Adam(net.parameters(), lr=lr)
        rng = np.random.default_rng(seed)
        for _ in range(epochs):
            order = rng.permutation(len(x_all))
            for start in range(0, len(order), batch_size):
                idx = torch.as_tensor(order[start:start + batch_size])
                loss = nn.functional.cross_entropy(net(x_all[idx]), y_all[idx])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
        return cls(net)

    def __call__(self, images: ImageBatch) -> np.ndarray:
        x = images_to_tensor(images)
        with torch.no_grad():
            feats = self.net.features(x).flatten(1)
        return feats.numpy().astype(np.float64)

    def predict(self, images: ImageBatch) -> np.ndarray:
        """Class predictions; used as the probe classifier."""
        x = images_to_tensor(images)
        with torch.no_grad():
            logits = self.net(x)
        return logits.argmax(dim=1).numpy()


class PretrainedBackboneExtractor(FeatureExtractor):
    """Loads externally supplied backbone weights (e.g. an Inception-V3
    feature layer exported as a TorchScript module). No weights are
    bundled; a missing file raises ExtractorUnavailable."""

    def __init__(self, weights_path, extractor_id="pretrained"):
        path = Path(weights_path) if weights_path else None
        if path is None or not path.exists():
            raise ExtractorUnavailable(
                f"pretrained extractor weights not found: {weights_path}"
            )
        self.module = torch.jit.load(str(path))
        self.module.eval()
        self.extractor_id = extractor_id

    def __call__(self, images: ImageBatch) -> np.ndarray:
        x = images_to_tensor(images)
        with torch.no_grad():
            feats = self.module(x)
        return feats.flatten(1).numpy().astype(np.float64)


# --- per-class FID protocol ---

@dataclass
class FIDReport:
    per_class: dict[int, float]
    extractor_id: str
    n_real: dict[int, int]
    n_gen: dict[int, int]


def fid_per_class(generated, real_validation: ImageBatch, validation_labels: LabelBatch,
                  extractor: FeatureExtractor, samples_per_class=None, seed=0) -> FIDReport:
    """Per-class FID of generated samples against the class-filtered
    validation reals.

    `generated` is either a trained generator (callable (z, labels) ->
    image tensor) or an (ImageBatch, LabelBatch) pair. Generated sample
    counts default to the validation class counts.
    """
    num_classes = validation_labels.num_classes
    report = FIDReport({}, extractor.extractor_id, {}, {})
    val_features = extractor(real_validation)
    rng = torch.Generator().manual_seed(seed)
    for k in range(num_classes):
        mask = validation_labels.labels == k
        if not mask.any():
            raise EmptyClassInValidation(k)
        n = int(mask.sum()) if samples_per_class is None else samples_per_class
        if isinstance(generated, tuple):
            gen_images, gen_labels = generated
            gen_mask = gen_labels.labels == k
            gen_batch = ImageBatch(gen_images.data[gen_mask], gen_images.range_tag)
        else:
            gen_batch = generate_images(generated, k, max(n, 2), rng)
        gen_features = extractor(gen_batch)
        report.per_class[k] = fid(compute_stats(val_features[mask]),
                                  compute_stats(gen_features))
        report.n_real[k] = int(mask.sum())
        report.n_gen[k] = gen_features.shape[0]
    return report


def generate_images(generator, class_index, n, rng: torch.Generator, batch_size=256) -> ImageBatch:
    chunks = []
    generator.eval()
    with torch.no_grad():
        for start in range(0, n, batch_size):
            count = min(batch_size, n - start)
            z = torch.randn(count, generator.latent_dim, generator=rng)
            labels = torch.full((count,), class_index, dtype=torch.long)
            chunks.append(generator(z, labels))
    return tensor_to_images(torch.cat(chunks))


# --- conditional image grid ---

def image_grid(generator, num_classes, rows, seed, real_examples: ImageBatch):
    """(rows+1) x num_classes grid: row 0 holds one real image per class;
    each later row shares a single fixed z across all class columns.

    Returns (uint8 grid array, metadata). Metadata stores the seed and
    per-row z vectors so any cell is recomputable.
    """
    if len(real_examples) < num_classes:
        raise MissingRealExample(len(real_examples))
    rng = torch.Generator().manual_seed(seed)
    zs = [torch.randn(generator.latent_dim, generator=rng) for _ in range(rows)]
    cells = []
    reals = real_examples
    if reals.range_tag == RANGE_SCALED:
        reals = inverse_scale(reals)
    cells.append([reals.data[c] for c in range(num_classes)])
    generator.eval()
    with torch.no_grad():
        for z in zs:
            z_batch = z.unsqueeze(0).repeat(num_classes, 1)
            labels = torch.arange(num_classes)
            out = inverse_scale(tensor_to_images(generator(z_batch, labels)))
            cells.append([out.data[c] for c in range(num_classes)])
    grid = np.concatenate([np.concatenate(row, axis=1) for row in cells], axis=0)
    metadata = {
        "seed": seed,
        "rows": rows,
        "num_classes": num_classes,
        "z": [z.numpy() for z in zs],
    }
    return grid, metadata


# --- latent dispersion / feature projection ---

def latent_dispersion(latents, labels, method="pca", seed=0):
    """2D projection for plotting plus the silhouette score computed in the
    full latent space. Zero-variance degenerate input scores 0 with a
    warning flag instead of failing."""
    from sklearn.decomposition import PCA
    from sklearn.metrics import silhouette_score

    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise SingleClass("silhouette needs at least two classes")
    degenerate = bool(np.allclose(latents.var(axis=0), 0))
    if degenerate:
        score = 0.0
    else:
        score = float(silhouette_score(latents, labels, metric="euclidean"))
    if method == "tsne":
        from sklearn.manifold import TSNE

        points = TSNE(n_components=2, random_state=seed,
                      perplexity=min(30, len(latents) - 1)).fit_transform(latents)
    else:
        points = PCA(n_components=2, random_state=seed).fit_transform(latents)
    return points, score, degenerate


def feature_projection(real_images: ImageBatch, gen_images: ImageBatch,
                       real_labels, gen_labels, extractor: FeatureExtractor, seed=0):
    """Joint 2D projection of real and generated extractor features;
    each output point carries (x, y, class, is_real)."""
    from sklearn.decomposition import PCA

    real_feats = extractor(real_images)
    gen_feats = extractor(gen_images)
    stacked = np.concatenate([real_feats, gen_feats])
    points = PCA(n_components=2, random_state=seed).fit_transform(stacked)
    records = []
    all_labels = np.concatenate([np.asarray(real_labels), np.asarray(gen_labels)])
    for i, (x, y) in enumerate(points):
        records.append({
            "x": float(x),
            "y": float(y),
            "class": int(all_labels[i]),
            "is_real": i < len(real_feats),
        })
    return records


# --- artifact writers ---

def write_fid_report(path, report: FIDReport):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "fid", "n_real", "n_gen", "extractor_id"])
        for k in sorted(report.per_class):
            writer.writerow([k, f"{report.per_class[k]:.6f}",
                             report.n_real[k], report.n_gen[k], report.extractor_id])


def write_scatter(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "class", "is_real"])
        for r in records:
            writer.writerow([f"{r['x']:.6f}", f"{r['y']:.6f}", r["class"], int(r["is_real"])])


def save_grid_png(path, grid: np.ndarray, metadata: dict):
    from PIL import Image

    array = grid[:, :, 0] if grid.shape[2] == 1 else grid
    Image.fromarray(array).save(path)
    sidecar = Path(path).with_suffix(".txt")
    lines = [f"seed = {metadata['seed']}",
             f"rows = {metadata['rows']}",
             f"num_classes = {metadata['num_classes']}"]
    for i, z in enumerate(metadata["z"]):
        lines.append(f"z_{i} = " + " ".join(f"{v:.8e}" for v in z))
    sidecar.write_text("\n".join(lines) + "\n")
