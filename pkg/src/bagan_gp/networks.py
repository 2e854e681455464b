"""Network definitions and assembly.

Four parametric parts: encoder (image -> latent), decoder (latent -> image),
class embedding (label -> latent-sized dense vector), and the discriminator
built from a convolutional trunk, a label embedding over the flattened
feature map, and a dense head emitting one unconstrained logit per sample.

Topology: 4 stride-2 conv blocks take 64x64 down to 4x4; the decoder mirrors
them with transposed convolutions. Feature widths are base_width * (1,2,4,8)
with base_width=64 by default; this is a config default, not a contract.
Batch normalization appears only on the decoder/generator path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import IMAGE_SIZE, RANGE_SCALED, ImageBatch
from .errors import (
    CheckpointIncompatible,
    DimMismatch,
    InvalidConfig,
    OutOfRangeLabel,
    ShapeMismatch,
)

FEATURE_MAP_SIZE = 4  # spatial size after the 4 stride-2 blocks


@dataclass(frozen=True)
class ArchitectureConfig:
    latent_dim: int = 128
    channels: int = 3
    leaky_slope: float = 0.2
    base_width: int = 64
    batch_norm_in_generator_only: bool = True

    def __post_init__(self):
        if self.latent_dim < 2:
            raise InvalidConfig(f"latent_dim must be >= 2, got {self.latent_dim}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise InvalidConfig(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.channels not in (1, 3):
            raise InvalidConfig(f"channels must be 1 or 3, got {self.channels}")
        if self.base_width < 1:
            raise InvalidConfig(f"base_width must be >= 1, got {self.base_width}")

    @property
    def feature_len(self):
        return 8 * self.base_width * FEATURE_MAP_SIZE * FEATURE_MAP_SIZE


@dataclass
class NetworkHandle:
    """A parametric network plus the metadata needed to check wiring."""

    module: nn.Module
    topology_id: str
    input_signature: tuple
    output_signature: tuple

    def named_weights(self):
        return [(k, v.detach().cpu().numpy()) for k, v in self.module.state_dict().items()]

    def __call__(self, *args, **kwargs):
        return self.module(*args, **kwargs)


class ConvTrunk(nn.Module):
    """Shared conv stack: scaled image -> (N, 8w, 4, 4) feature map."""

    def __init__(self, cfg: ArchitectureConfig):
        super().__init__()
        w = cfg.base_width
        widths = [cfg.channels, w, 2 * w, 4 * w, 8 * w]
        blocks = []
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            blocks += [
                nn.Conv2d(c_in, c_out, kernel_size=4, stride=2, padding=1),
                nn.LeakyReLU(cfg.leaky_slope),
            ]
        self.blocks = nn.Sequential(*blocks)

    def forward(self, x):
        return self.blocks(x)


class Encoder(nn.Module):
    def __init__(self, cfg: ArchitectureConfig):
        super().__init__()
        self.trunk = ConvTrunk(cfg)
        self.fc = nn.Linear(cfg.feature_len, cfg.latent_dim)

    def forward(self, x):
        features = self.trunk(x)
        return self.fc(features.flatten(1))


class Decoder(nn.Module):
    def __init__(self, cfg: ArchitectureConfig):
        super().__init__()
        w = cfg.base_width
        self.base_channels = 8 * w
        self.fc = nn.Linear(cfg.latent_dim, self.base_channels * FEATURE_MAP_SIZE**2)
        widths = [8 * w, 4 * w, 2 * w, w]
        blocks = []
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            blocks += [
                nn.ConvTranspose2d(c_in, c_out, kernel_size=4, stride=2, padding=1),
                nn.BatchNorm2d(c_out),
                nn.LeakyReLU(cfg.leaky_slope),
            ]
        blocks += [
            nn.ConvTranspose2d(widths[-1], cfg.channels, kernel_size=4, stride=2, padding=1),
            nn.Tanh(),
        ]
        self.blocks = nn.Sequential(*blocks)

    def forward(self, z):
        x = self.fc(z).view(-1, self.base_channels, FEATURE_MAP_SIZE, FEATURE_MAP_SIZE)
        return self.blocks(x)


class ClassEmbedding(nn.Module):
    """Lookup table: class label -> trainable dense vector."""

    def __init__(self, num_classes, dim):
        super().__init__()
        self.num_classes = num_classes
        self.table = nn.Embedding(num_classes, dim)

    def forward(self, labels):
        if labels.numel() and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise OutOfRangeLabel(
                f"label outside [0, {self.num_classes}): "
                f"[{int(labels.min())}, {int(labels.max())}]"
            )
        return self.table(labels)


class GeneratorAssembly(nn.Module):
    """G(z, c) = decoder(embed(c) * z); adds no parameters of its own."""

    def __init__(self, embedding: NetworkHandle, decoder: NetworkHandle):
        super().__init__()
        emb_dim = embedding.output_signature[-1]
        dec_dim = decoder.input_signature[-1]
        if emb_dim != dec_dim:
            raise DimMismatch(f"embedding dim {emb_dim} != decoder input {dec_dim}")
        self.embedding = embedding.module
        self.decoder = decoder.module
        self.latent_dim = dec_dim

    def forward(self, z, labels):
        return self.decoder(self.embedding(labels) * z)


class DiscriminatorAssembly(nn.Module):
    """D(x, c) = head(flatten(trunk(x)) * label_embed(c)); scalar logit."""

    def __init__(self, trunk: NetworkHandle, label_embed: NetworkHandle, head: NetworkHandle):
        super().__init__()
        feat_len = int(np.prod(trunk.output_signature[1:]))
        if label_embed.output_signature[-1] != feat_len:
            raise DimMismatch(
                f"label embedding dim {label_embed.output_signature[-1]} != "
                f"flattened feature length {feat_len}"
            )
        if head.input_signature[-1] != feat_len:
            raise DimMismatch("head input does not match feature length")
        self.trunk = trunk.module
        self.label_embed = label_embed.module
        self.head = head.module

    def forward(self, x, labels):
        features = self.trunk(x).flatten(1)
        combined = features * self.label_embed(labels)
        return self.head(combined).squeeze(1)


def build_encoder(cfg: ArchitectureConfig) -> NetworkHandle:
    return NetworkHandle(
        module=Encoder(cfg),
        topology_id=f"encoder/w{cfg.base_width}",
        input_signature=(None, cfg.channels, IMAGE_SIZE, IMAGE_SIZE),
        output_signature=(None, cfg.latent_dim),
    )


def build_decoder(cfg: ArchitectureConfig) -> NetworkHandle:
    return NetworkHandle(
        module=Decoder(cfg),
        topology_id=f"decoder/w{cfg.base_width}",
        input_signature=(None, cfg.latent_dim),
        output_signature=(None, cfg.channels, IMAGE_SIZE, IMAGE_SIZE),
    )


def build_embedding(cfg: ArchitectureConfig, num_classes: int) -> NetworkHandle:
    if num_classes < 2:
        raise InvalidConfig(f"num_classes must be >= 2, got {num_classes}")
    return NetworkHandle(
        module=ClassEmbedding(num_classes, cfg.latent_dim),
        topology_id=f"embedding/k{num_classes}",
        input_signature=(None,),
        output_signature=(None, cfg.latent_dim),
    )


def build_discriminator_parts(
    cfg: ArchitectureConfig, num_classes: int
) -> tuple[NetworkHandle, NetworkHandle, NetworkHandle]:
    if num_classes < 2:
        raise InvalidConfig(f"num_classes must be >= 2, got {num_classes}")
    trunk = NetworkHandle(
        module=ConvTrunk(cfg),
        topology_id=f"disc_trunk/w{cfg.base_width}",
        input_signature=(None, cfg.channels, IMAGE_SIZE, IMAGE_SIZE),
        output_signature=(None, 8 * cfg.base_width, FEATURE_MAP_SIZE, FEATURE_MAP_SIZE),
    )
    label_embed = NetworkHandle(
        module=ClassEmbedding(num_classes, cfg.feature_len),
        topology_id=f"disc_label_embed/k{num_classes}",
        input_signature=(None,),
        output_signature=(None, cfg.feature_len),
    )
    head = NetworkHandle(
        module=nn.Linear(cfg.feature_len, 1),
        topology_id="disc_head",
        input_signature=(None, cfg.feature_len),
        output_signature=(None, 1),
    )
    return trunk, label_embed, head


def assemble_generator(embedding: NetworkHandle, decoder: NetworkHandle) -> GeneratorAssembly:
    return GeneratorAssembly(embedding, decoder)


def assemble_discriminator(
    trunk: NetworkHandle, label_embed: NetworkHandle, head: NetworkHandle
) -> DiscriminatorAssembly:
    return DiscriminatorAssembly(trunk, label_embed, head)


def transfer_weights(source: NetworkHandle, target: NetworkHandle, layer_map: dict) -> NetworkHandle:
    """Copy mapped parameters bitwise from source to target, in place.

    layer_map: source state-dict key -> target state-dict key. Unmapped
    target weights are untouched.
    """
    src_state = source.module.state_dict()
    tgt_state = target.module.state_dict()
    for src_key, tgt_key in layer_map.items():
        if src_key not in src_state:
            raise ShapeMismatch(src_key, expected="present in source", got="missing")
        if tgt_key not in tgt_state:
            raise ShapeMismatch(tgt_key, expected="present in target", got="missing")
        if src_state[src_key].shape != tgt_state[tgt_key].shape:
            raise ShapeMismatch(
                tgt_key, expected=tuple(src_state[src_key].shape),
                got=tuple(tgt_state[tgt_key].shape),
            )
        tgt_state[tgt_key] = src_state[src_key].clone()
    target.module.load_state_dict(tgt_state)
    return target


def matching_layer_map(source: NetworkHandle, target: NetworkHandle, prefix_from="", prefix_to=""):
    """Map every source key sharing prefix_from onto target's prefix_to keys."""
    src_keys = source.module.state_dict().keys()
    out = {}
    for key in src_keys:
        if key.startswith(prefix_from):
            out[key] = prefix_to + key[len(prefix_from):]
    return out


# --- tensor conversions ---

def images_to_tensor(batch: ImageBatch, dtype=torch.float32) -> torch.Tensor:
    if batch.range_tag != RANGE_SCALED:
        raise ValueError("networks consume scaled batches; call preprocess first")
    return torch.as_tensor(batch.data, dtype=dtype).permute(0, 3, 1, 2).contiguous()


def tensor_to_images(t: torch.Tensor) -> ImageBatch:
    array = t.detach().cpu().permute(0, 2, 3, 1).numpy().astype(np.float32)
    return ImageBatch(np.clip(array, -1.0, 1.0), RANGE_SCALED)


# --- checkpoint format ---

def save_checkpoint(directory, networks: dict[str, NetworkHandle], manifest: dict):
    """Write one .npz per network plus a key-value manifest.txt."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {v}" for k, v in manifest.items()]
    for name, handle in networks.items():
        arrays = {k: v.detach().cpu().numpy() for k, v in handle.module.state_dict().items()}
        np.savez(directory / f"{name}.npz", **arrays)
        lines.append(f"topology.{name} = {handle.topology_id}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.txt"
    if not path.exists():
        raise CheckpointIncompatible(f"no manifest.txt in {directory}")
    out = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_weights_into(directory, name: str, handle: NetworkHandle) -> NetworkHandle:
    path = Path(directory) / f"{name}.npz"
    if not path.exists():
        raise CheckpointIncompatible(f"checkpoint {directory} has no network {name!r}")
    with np.load(path) as archive:
        state = {k: torch.as_tensor(archive[k]) for k in archive.files}
    current = handle.module.state_dict()
    for key, tensor in state.items():
        if key not in current:
            raise CheckpointIncompatible(f"unexpected weight {key!r} for {name}")
        if current[key].shape != tensor.shape:
            raise CheckpointIncompatible(
                f"{name}.{key}: checkpoint shape {tuple(tensor.shape)} != "
                f"model shape {tuple(current[key].shape)}"
            )
    handle.module.load_state_dict(state)
    return handle
