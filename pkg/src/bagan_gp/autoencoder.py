"""Stage-1 pretraining.

Two flavors: the supervised autoencoder whose reconstruction path is
decoder(embed(y) * encode(x)), and the plain unsupervised autoencoder
decoder(encode(x)) used by the original-baseline pipeline together with a
per-class Gaussian latent model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import EmptyClass, NonFiniteLoss, NotPSD
from .networks import NetworkHandle, images_to_tensor, save_checkpoint


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.9)
    batch_size: int = 128


@dataclass
class SupervisedAutoencoder:
    encoder: NetworkHandle
    embedding: NetworkHandle
    decoder: NetworkHandle

    def reconstruct(self, x, labels):
        return self.decoder.module(self.embedding.module(labels) * self.encoder.module(x))


@dataclass
class ClassGaussianModel:
    """Per-class latent mean and covariance fitted on encoded training data."""

    means: np.ndarray        # (K, L)
    covariances: np.ndarray  # (K, L, L)

    @property
    def num_classes(self):
        return self.means.shape[0]

    @property
    def latent_dim(self):
        return self.means.shape[1]

    def regularization(self, k):
        # keeps 1-sample minority classes samplable; scale-aware floor
        trace = float(np.trace(self.covariances[k]))
        return max(1e-6 * trace / self.latent_dim, 1e-8)


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _run_reconstruction_training(params, forward, images, labels, epochs, opt_config, seed):
    """Shared MSE loop; forward(x, y) must return the reconstruction."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    x_all = images_to_tensor(images)
    y_all = None if labels is None else torch.as_tensor(labels, dtype=torch.long)
    optimizer = torch.optim.Adam(params, lr=opt_config.lr, betas=opt_config.betas)
    log = []
    step = 0
    for epoch in range(epochs):
        losses, weights = [], []
        for idx in _epoch_batches(len(x_all), opt_config.batch_size, rng):
            idx_t = torch.as_tensor(idx)
            x = x_all[idx_t]
            y = None if y_all is None else y_all[idx_t]
            recon = forward(x, y)
            loss = torch.mean((recon - x) ** 2)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(step)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            weights.append(len(idx))
            step += 1
        log.append(float(np.average(losses, weights=weights)))
    return log


def pretrain_supervised_ae(ae: SupervisedAutoencoder, images, labels, epochs,
                           opt_config: OptimizerConfig = OptimizerConfig(), seed=0):
    """Joint end-to-end MSE training of encoder, embedding, and decoder.

    Returns the per-epoch mean reconstruction MSE.
    """
    params = (
        list(ae.encoder.module.parameters())
        + list(ae.embedding.module.parameters())
        + list(ae.decoder.module.parameters())
    )
    return _run_reconstruction_training(
        params, ae.reconstruct, images, labels, epochs, opt_config, seed
    )


def pretrain_unsupervised_ae(encoder: NetworkHandle, decoder: NetworkHandle, images, epochs,
                             opt_config: OptimizerConfig = OptimizerConfig(), seed=0):
    """Plain reconstruction training of decoder(encode(x)); no labels."""
    params = list(encoder.module.parameters()) + list(decoder.module.parameters())

    def forward(x, _y):
        return decoder.module(encoder.module(x))

    return _run_reconstruction_training(params, forward, images, None, epochs, opt_config, seed)


def encode_dataset(encoder: NetworkHandle, images, batch_size=256):
    x_all = images_to_tensor(images)
    chunks = []
    encoder.module.eval()
    with torch.no_grad():
        for start in range(0, len(x_all), batch_size):
            chunks.append(encoder.module(x_all[start:start + batch_size]))
    encoder.module.train()
    return torch.cat(chunks).numpy()


def fit_class_gaussians(encoder: NetworkHandle, images, labels) -> ClassGaussianModel:
    """Sample mean and covariance of encoded latents per class."""
    labels = np.asarray(labels)
    num_classes = int(labels.max()) + 1
    latents = encode_dataset(encoder, images)
    dim = latents.shape[1]
    means = np.zeros((num_classes, dim))
    covs = np.zeros((num_classes, dim, dim))
    for k in range(num_classes):
        members = latents[labels == k]
        if members.shape[0] == 0:
            raise EmptyClass(k)
        means[k] = members.mean(axis=0)
        if members.shape[0] > 1:
            covs[k] = np.cov(members, rowvar=False)
    return ClassGaussianModel(means=means, covariances=covs)


def sample_labeled_latents(model: ClassGaussianModel, k, n, seed=0) -> np.ndarray:
    """n draws from N(mu_k, Sigma_k + eps*I)."""
    if not 0 <= k < model.num_classes:
        raise EmptyClass(k)
    if n < 1:
        raise ValueError("n must be >= 1")
    sigma = model.covariances[k] + model.regularization(k) * np.eye(model.latent_dim)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPSD(f"class {k}: covariance not positive definite") from exc
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal((n, model.latent_dim))
    return model.means[k] + normals @ chol.T


# --- stage-1 artifacts ---

def save_stage1_checkpoint(directory, tag, networks: dict, manifest: dict, log=None):
    """Checkpoint in the shared format, tagged "ae_supervised" or
    "ae_unsupervised", with the loss curve as CSV alongside."""
    save_checkpoint(directory, networks, dict(manifest, tag=tag))
    if log is not None:
        with open(Path(directory) / "pretrain_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mse"])
            for epoch, mse in enumerate(log):
                writer.writerow([epoch, f"{mse:.8f}"])
