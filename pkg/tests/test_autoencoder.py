import copy

import numpy as np
import pytest
import torch

from bagan_gp import autoencoder as ae
from bagan_gp import data, networks, toydata
from bagan_gp.errors import EmptyClass, NotPSD
from bagan_gp.networks import ArchitectureConfig, NetworkHandle


@pytest.fixture
def cfg():
    return ArchitectureConfig(latent_dim=16, channels=1, base_width=8)


def constant_batch(n=32, value=0):
    raw = np.full((n, 64, 64, 1), value, dtype=np.uint8)
    return data.preprocess(data.ImageBatch(raw))


def build_supervised(cfg, num_classes=2, seed=0):
    torch.manual_seed(seed)
    return ae.SupervisedAutoencoder(
        encoder=networks.build_encoder(cfg),
        embedding=networks.build_embedding(cfg, num_classes),
        decoder=networks.build_decoder(cfg),
    )


class TestSupervisedPretraining:
    def test_constant_dataset_learned(self, cfg):
        # a constant target is exactly learnable (the constant predictor
        # has zero error), so a few epochs must reach near-zero MSE
        images = constant_batch(64, value=128)
        labels = np.zeros(64, dtype=np.int64)
        labels[32:] = 1
        sup = build_supervised(cfg)
        opt = ae.OptimizerConfig(lr=5e-3, batch_size=16)
        log = ae.pretrain_supervised_ae(sup, images, labels, 25, opt, seed=0)
        assert log[-1] < 1e-3

    def test_zero_epochs_no_op(self, cfg):
        sup = build_supervised(cfg)
        before = copy.deepcopy(sup.encoder.module.state_dict())
        images = constant_batch(8)
        log = ae.pretrain_supervised_ae(sup, images, np.zeros(8, dtype=np.int64), 0)
        assert log == []
        after = sup.encoder.module.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)

    def test_toy_dataset_loss_decreases(self, cfg, tiny_dataset):
        images, labels = tiny_dataset
        sup = build_supervised(cfg, num_classes=4)
        log = ae.pretrain_supervised_ae(sup, images, labels.labels, 30,
                                        ae.OptimizerConfig(batch_size=32), seed=0)
        assert log[-1] < log[0]

    def test_embedding_vectors_disperse_after_pretraining(self, cfg, tiny_dataset):
        images, labels = tiny_dataset
        sup = build_supervised(cfg, num_classes=4)
        ae.pretrain_supervised_ae(sup, images, labels.labels, 10,
                                  ae.OptimizerConfig(batch_size=32), seed=0)
        with torch.no_grad():
            vectors = sup.embedding.module(torch.arange(4))
        sims = torch.nn.functional.cosine_similarity(
            vectors.unsqueeze(0), vectors.unsqueeze(1), dim=2
        )
        off_diag = sims[~torch.eye(4, dtype=torch.bool)]
        assert off_diag.max().item() < 0.99


class TestUnsupervisedPretraining:
    def test_constant_dataset_learned(self, cfg):
        images = constant_batch(64, value=128)
        torch.manual_seed(0)
        enc, dec = networks.build_encoder(cfg), networks.build_decoder(cfg)
        log = ae.pretrain_unsupervised_ae(enc, dec, images, 15,
                                          ae.OptimizerConfig(lr=5e-3, batch_size=16), seed=0)
        assert log[-1] < 1e-3

    def test_same_seed_identical_curves(self, cfg):
        images = constant_batch(24, value=100)
        logs = []
        for _ in range(2):
            torch.manual_seed(3)
            enc, dec = networks.build_encoder(cfg), networks.build_decoder(cfg)
            logs.append(ae.pretrain_unsupervised_ae(enc, dec, images, 3,
                                                    ae.OptimizerConfig(batch_size=8), seed=5))
        assert logs[0] == logs[1]

    def test_toy_dataset_loss_decreases(self, cfg, tiny_dataset):
        images, _ = tiny_dataset
        torch.manual_seed(0)
        enc, dec = networks.build_encoder(cfg), networks.build_decoder(cfg)
        log = ae.pretrain_unsupervised_ae(enc, dec, images, 10,
                                          ae.OptimizerConfig(batch_size=32), seed=0)
        assert log[-1] < log[0]

    def test_supervised_with_frozen_ones_embedding_matches(self, cfg):
        """With the embedding pinned to all-ones, the supervised loop is
        computation-identical to the unsupervised one."""
        images, labels = toydata.make_similar_shapes_dataset(counts=(16, 16), seed=2)
        scaled = data.preprocess(images)
        torch.manual_seed(7)
        enc, dec = networks.build_encoder(cfg), networks.build_decoder(cfg)
        enc2 = copy.deepcopy(enc)
        dec2 = copy.deepcopy(dec)
        emb = networks.build_embedding(cfg, 2)
        with torch.no_grad():
            emb.module.table.weight.fill_(1.0)
        for p in emb.module.parameters():
            p.requires_grad_(False)
        sup = ae.SupervisedAutoencoder(enc, emb, dec)
        opt = ae.OptimizerConfig(batch_size=8)
        sup_log = ae.pretrain_supervised_ae(sup, scaled, labels.labels, 3, opt, seed=11)
        unsup_log = ae.pretrain_unsupervised_ae(enc2, dec2, scaled, 3, opt, seed=11)
        assert sup_log == unsup_log


class _CropEncoder(torch.nn.Module):
    """Test stub: reads the top-left pixels as the latent vector."""

    def __init__(self, dim):
        super().__init__()
        self.dim = dim

    def forward(self, x):
        return x.flatten(1)[:, : self.dim]


def crop_encoder_handle(dim):
    return NetworkHandle(module=_CropEncoder(dim), topology_id="crop",
                         input_signature=(None, 1, 64, 64), output_signature=(None, dim))


def plant_latents(latents):
    """Embed known latent values into image pixels for _CropEncoder."""
    n, dim = latents.shape
    imgs = np.zeros((n, 64, 64, 1), dtype=np.float32)
    imgs.reshape(n, -1)[:, :dim] = np.clip(latents, -1, 1)
    return data.ImageBatch(imgs, data.RANGE_SCALED)


class TestClassGaussians:
    def test_degenerate_single_point_class(self):
        latents = np.tile(np.linspace(-0.5, 0.5, 4), (6, 1))
        labels = np.array([0, 0, 0, 1, 1, 1])
        model = ae.fit_class_gaussians(crop_encoder_handle(4), plant_latents(latents), labels)
        np.testing.assert_allclose(model.means[0], latents[0], atol=1e-7)
        np.testing.assert_allclose(model.covariances[0], 0, atol=1e-7)

    def test_monte_carlo_recovery(self):
        rng = np.random.default_rng(0)
        mu = np.array([0.2, -0.1, 0.05])
        cov = np.array([[0.04, 0.01, 0.0], [0.01, 0.03, 0.0], [0.0, 0.0, 0.02]])
        draws = rng.multivariate_normal(mu, cov, size=10_000)
        labels = np.zeros(10_000, dtype=np.int64)
        # add a second trivial class to satisfy the >=2-classes world
        draws = np.concatenate([draws, np.zeros((2, 3))])
        labels = np.concatenate([labels, [1, 1]])
        model = ae.fit_class_gaussians(crop_encoder_handle(3), plant_latents(draws), labels)
        assert np.abs(model.means[0] - mu).max() < 0.05
        assert np.abs(model.covariances[0] - cov).max() < 0.05

    def test_missing_class_rejected(self):
        latents = np.zeros((4, 3))
        labels = np.array([0, 0, 0, 2])  # class 1 absent
        with pytest.raises(EmptyClass):
            ae.fit_class_gaussians(crop_encoder_handle(3), plant_latents(latents), labels)

    def test_covariance_symmetry(self):
        rng = np.random.default_rng(1)
        latents = rng.normal(0, 0.2, size=(50, 5))
        labels = np.array([0] * 25 + [1] * 25)
        model = ae.fit_class_gaussians(crop_encoder_handle(5), plant_latents(latents), labels)
        for k in range(2):
            assert np.abs(model.covariances[k] - model.covariances[k].T).max() == 0.0


class TestLatentSampling:
    def test_tiny_variance_concentration(self):
        mu = np.array([[0.3, -0.2]])
        model = ae.ClassGaussianModel(means=mu, covariances=np.zeros((1, 2, 2)))
        draws = ae.sample_labeled_latents(model, 0, 100, seed=0)
        assert np.abs(draws - mu[0]).max() < 0.01

    def test_single_draw_shape(self):
        model = ae.ClassGaussianModel(means=np.zeros((2, 7)),
                                      covariances=np.tile(np.eye(7), (2, 1, 1)))
        assert ae.sample_labeled_latents(model, 1, 1, seed=3).shape == (1, 7)

    def test_law_of_large_numbers(self):
        mu = np.array([[0.5, -0.5, 0.0]])
        cov = 0.3 * np.eye(3)
        model = ae.ClassGaussianModel(means=mu, covariances=cov[None])
        draws = ae.sample_labeled_latents(model, 0, 50_000, seed=1)
        assert np.abs(draws.mean(axis=0) - mu[0]).max() < 0.05

    def test_not_psd_rejected(self):
        bad = np.array([[1.0, 0.0], [0.0, -1.0]])
        model = ae.ClassGaussianModel(means=np.zeros((1, 2)), covariances=bad[None])
        with pytest.raises(NotPSD):
            ae.sample_labeled_latents(model, 0, 10)

    def test_invalid_class_rejected(self):
        model = ae.ClassGaussianModel(means=np.zeros((1, 2)),
                                      covariances=np.eye(2)[None])
        with pytest.raises(EmptyClass):
            ae.sample_labeled_latents(model, 5, 10)
