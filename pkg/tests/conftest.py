import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_arch():
    from bagan_gp.networks import ArchitectureConfig

    return ArchitectureConfig(latent_dim=16, channels=1, base_width=8)


@pytest.fixture(scope="session")
def tiny_dataset():
    """80-image similar-shapes set, preprocessed, shared read-only."""
    from bagan_gp import data, toydata

    images, labels = toydata.make_similar_shapes_dataset(counts=(40, 10, 10, 20), seed=1)
    return data.preprocess(images), labels


def rand_psd(rng, dim, scale=1.0):
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T) / dim + 0.1 * np.eye(dim)
