"""Stage-2 adversarial training.

Initializes generator/discriminator from a stage-1 checkpoint (or fresh),
runs the alternating loop with the configured loss variant and critic
ratio, and writes checkpoints plus a metrics log into a run directory.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import losses
from .errors import CheckpointIncompatible, NonFiniteLoss
from .losses import LossConfig
from .networks import (
    ArchitectureConfig,
    GeneratorAssembly,
    DiscriminatorAssembly,
    assemble_discriminator,
    assemble_generator,
    build_decoder,
    build_discriminator_parts,
    build_embedding,
    build_encoder,
    images_to_tensor,
    load_weights_into,
    matching_layer_map,
    read_manifest,
    save_checkpoint,
    transfer_weights,
)

INIT_MODES = ("both", "generator_only", "none")

_GP_VARIANTS = ("wgan_gp", "dragan", "cdragan", "bagan_gp")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    seed: int = 0
    batch_size: int = 128
    lr: float = 2e-4
    adam_momenta: tuple[float, float] = (0.5, 0.9)
    n_critic: int | None = None  # None -> 5 for GP variants, 1 otherwise
    loss: LossConfig = field(default_factory=LossConfig)
    init_mode: str = "both"
    checkpoint_every: int = 0  # 0 -> final checkpoint only

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.n_critic is not None and self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"unknown init_mode {self.init_mode!r}")

    @property
    def effective_n_critic(self):
        if self.n_critic is not None:
            return self.n_critic
        return 5 if self.loss.variant in _GP_VARIANTS else 1


def build_fresh_networks(arch: ArchitectureConfig, num_classes):
    embedding = build_embedding(arch, num_classes)
    decoder = build_decoder(arch)
    trunk, label_embed, head = build_discriminator_parts(arch, num_classes)
    return (
        assemble_generator(embedding, decoder),
        assemble_discriminator(trunk, label_embed, head),
    )


def init_from_stage1(ae_checkpoint, cfg: TrainConfig, arch: ArchitectureConfig,
                     num_classes, inherit_disc_trunk=False):
    """Build the stage-2 pair, optionally transplanting stage-1 weights.

    init_mode "both": generator takes the pretrained decoder (and embedding,
    when the checkpoint has one) and the discriminator trunk takes the
    encoder's conv stack when inherit_disc_trunk is set (off by default; the
    fresh label embedding and head always start from random init).
    "generator_only": discriminator entirely fresh. "none": both fresh.
    """
    torch.manual_seed(cfg.seed)
    embedding = build_embedding(arch, num_classes)
    decoder = build_decoder(arch)
    trunk, label_embed, head = build_discriminator_parts(arch, num_classes)

    if cfg.init_mode != "none":
        manifest = read_manifest(ae_checkpoint)
        for key, ours in (("latent_dim", arch.latent_dim),
                          ("channels", arch.channels),
                          ("num_classes", num_classes)):
            if key in manifest and int(manifest[key]) != ours:
                raise CheckpointIncompatible(
                    f"checkpoint {key}={manifest[key]} but run uses {ours}"
                )
        load_weights_into(ae_checkpoint, "decoder", decoder)
        if (Path(ae_checkpoint) / "embedding.npz").exists():
            load_weights_into(ae_checkpoint, "embedding", embedding)
        if cfg.init_mode == "both" and inherit_disc_trunk:
            encoder = build_encoder(arch)
            load_weights_into(ae_checkpoint, "encoder", encoder)
            transfer_weights(encoder, trunk, matching_layer_map(encoder, trunk, "trunk.", ""))

    return (
        assemble_generator(embedding, decoder),
        assemble_discriminator(trunk, label_embed, head),
    )


class GanTrainer:
    """Owns the weights, optimizers, RNG, and step counters for one run."""

    def __init__(self, generator: GeneratorAssembly, discriminator: DiscriminatorAssembly,
                 cfg: TrainConfig, num_classes: int):
        self.generator = generator
        self.discriminator = discriminator
        self.cfg = cfg
        self.num_classes = num_classes
        self.opt_g = torch.optim.Adam(generator.parameters(), lr=cfg.lr, betas=cfg.adam_momenta)
        self.opt_d = torch.optim.Adam(discriminator.parameters(), lr=cfg.lr, betas=cfg.adam_momenta)
        self.rng = torch.Generator().manual_seed(cfg.seed)
        self.epoch = 0
        self.d_updates = 0
        self.g_updates = 0
        self.fake_label_counts = np.zeros(num_classes, dtype=np.int64)

    # --- single optimizer updates ---

    def _sample_z(self, n):
        return torch.randn(n, self.generator.latent_dim, generator=self.rng)

    def _fake_labels(self, y_r):
        loss_cfg = self.cfg.loss
        if loss_cfg.variant == "bagan_gp" and loss_cfg.bagan_gp_version != "v1":
            y_f = losses.sample_balanced_labels(len(y_r), self.num_classes, self.rng)
        else:
            y_f = y_r
        # every y_f here conditions a generator forward pass; the balanced
        # exposure check reads these counts
        self.fake_label_counts += np.bincount(y_f.numpy(), minlength=self.num_classes)
        return y_f

    def discriminator_update(self, x_r, y_r):
        cfg = self.cfg.loss
        z = self._sample_z(len(x_r))
        gp = torch.zeros(())
        if cfg.variant == "bagan_gp" and cfg.bagan_gp_version != "v1":
            y_f = self._fake_labels(y_r)
            y_wrong = losses.sample_wrong_labels(y_r, self.num_classes, self.rng)
            d_loss, parts = losses.bagan_gp_d_loss(
                self.discriminator, self.generator, x_r, y_r, z, y_f, y_wrong,
                cfg, self.rng, return_parts=True,
            )
            gp = parts["gp"]
        else:
            y_f = self._fake_labels(y_r)
            x_g = self.generator(z, y_f).detach()
            if cfg.variant in ("cdragan", "bagan_gp"):
                d_loss, parts = losses.cdragan_d_loss(
                    self.discriminator, x_r, y_r, x_g, cfg, self.rng, return_parts=True
                )
                gp = parts["gp"]
            elif cfg.variant == "original_gan":
                d_loss = losses.original_d_loss(
                    self.discriminator(x_r, y_r), self.discriminator(x_g, y_r)
                )
            elif cfg.variant == "wgan":
                d_loss = -losses.wgan_d_objective(
                    self.discriminator(x_r, y_r), self.discriminator(x_g, y_r)
                )
            elif cfg.variant == "wgan_gp":
                base = -losses.wgan_d_objective(
                    self.discriminator(x_r, y_r), self.discriminator(x_g, y_r)
                )
                x_hat = losses.interpolate(x_r, x_g, self.rng)
                gp = losses.gradient_penalty(self.discriminator, x_hat, y_r)
                d_loss = base + cfg.lambda_gp * gp
            elif cfg.variant == "dragan":
                base = losses.original_d_loss(
                    self.discriminator(x_r, y_r), self.discriminator(x_g, y_r)
                )
                if cfg.lambda_gp > 0:
                    endpoint = (x_g if cfg.interpolation == "model"
                                else losses.noise_endpoint(x_r, self.rng))
                    x_hat = losses.interpolate(x_r, endpoint, self.rng)
                    gp = losses.gradient_penalty(self.discriminator, x_hat, y_r)
                d_loss = base + cfg.lambda_gp * gp
            else:
                raise ValueError(f"unhandled variant {cfg.variant!r}")
        if not torch.isfinite(d_loss):
            raise NonFiniteLoss(self.d_updates)
        self.opt_d.zero_grad()
        d_loss.backward()
        self.opt_d.step()
        self.d_updates += 1
        return d_loss.item(), gp.item()

    def generator_update(self, y_r):
        cfg = self.cfg.loss
        z = self._sample_z(len(y_r))
        y = self._fake_labels(y_r)
        if cfg.variant in ("wgan", "wgan_gp"):
            g_loss = losses.wgan_g_loss(self.discriminator(self.generator(z, y), y))
        else:
            g_loss = losses.original_g_loss(self.discriminator(self.generator(z, y), y))
        if not torch.isfinite(g_loss):
            raise NonFiniteLoss(self.g_updates)
        self.opt_g.zero_grad()
        g_loss.backward()
        self.opt_g.step()
        self.g_updates += 1
        return g_loss.item()

    # --- step = n_critic discriminator updates + 1 generator update ---

    def train_step(self, real_batches):
        """real_batches: n_critic fresh (images, labels) tensor pairs."""
        if len(real_batches) != self.cfg.effective_n_critic:
            raise ValueError(
                f"expected {self.cfg.effective_n_critic} critic batches, "
                f"got {len(real_batches)}"
            )
        d_losses, gps = [], []
        for x_r, y_r in real_batches:
            d_loss, gp = self.discriminator_update(x_r, y_r)
            d_losses.append(d_loss)
            gps.append(gp)
        g_loss = self.generator_update(real_batches[-1][1])
        return {
            "d_loss": float(np.mean(d_losses)),
            "g_loss": g_loss,
            "gp": float(np.mean(gps)),
        }

    def epoch_batches(self, x_all, y_all):
        """Random real mini-batches; each train_step consumes n_critic of them."""
        n = len(x_all)
        n_critic = self.cfg.effective_n_critic
        steps = max(n // self.cfg.batch_size, 1)
        for _ in range(steps):
            group = []
            for _ in range(n_critic):
                idx = torch.randint(0, n, (self.cfg.batch_size,), generator=self.rng)
                group.append((x_all[idx], y_all[idx]))
            yield group


def _checkpoint_networks(trainer: GanTrainer):
    from .networks import NetworkHandle

    def wrap(module, topo):
        return NetworkHandle(module=module, topology_id=topo,
                             input_signature=(None,), output_signature=(None,))

    return {
        "embedding": wrap(trainer.generator.embedding, "embedding"),
        "decoder": wrap(trainer.generator.decoder, "decoder"),
        "disc_trunk": wrap(trainer.discriminator.trunk, "disc_trunk"),
        "disc_label_embed": wrap(trainer.discriminator.label_embed, "disc_label_embed"),
        "disc_head": wrap(trainer.discriminator.head, "disc_head"),
    }


def save_train_checkpoint(directory, trainer: GanTrainer, arch: ArchitectureConfig):
    directory = Path(directory)
    save_checkpoint(directory, _checkpoint_networks(trainer), {
        "tag": "gan",
        "latent_dim": arch.latent_dim,
        "channels": arch.channels,
        "num_classes": trainer.num_classes,
        "epoch": trainer.epoch,
    })
    torch.save({
        "opt_g": trainer.opt_g.state_dict(),
        "opt_d": trainer.opt_d.state_dict(),
        "rng_state": trainer.rng.get_state(),
        "epoch": trainer.epoch,
        "d_updates": trainer.d_updates,
        "g_updates": trainer.g_updates,
        "fake_label_counts": trainer.fake_label_counts,
    }, directory / "trainer_state.pt")


def load_train_checkpoint(directory, cfg: TrainConfig, arch: ArchitectureConfig) -> GanTrainer:
    directory = Path(directory)
    manifest = read_manifest(directory)
    num_classes = int(manifest["num_classes"])
    if int(manifest["latent_dim"]) != arch.latent_dim or int(manifest["channels"]) != arch.channels:
        raise CheckpointIncompatible("architecture does not match checkpoint manifest")
    generator, discriminator = build_fresh_networks(arch, num_classes)
    trainer = GanTrainer(generator, discriminator, cfg, num_classes)
    for name, handle in _checkpoint_networks(trainer).items():
        load_weights_into(directory, name, handle)
    state_path = directory / "trainer_state.pt"
    if state_path.exists():
        state = torch.load(state_path, weights_only=False)
        trainer.opt_g.load_state_dict(state["opt_g"])
        trainer.opt_d.load_state_dict(state["opt_d"])
        trainer.rng.set_state(state["rng_state"])
        trainer.epoch = state["epoch"]
        trainer.d_updates = state["d_updates"]
        trainer.g_updates = state["g_updates"]
        trainer.fake_label_counts = state["fake_label_counts"]
    return trainer


def generator_for_checkpoint(directory, arch: ArchitectureConfig) -> GeneratorAssembly:
    """Inference-only generator rebuilt from a run checkpoint."""
    manifest = read_manifest(directory)
    num_classes = int(manifest["num_classes"])
    embedding = build_embedding(arch, num_classes)
    decoder = build_decoder(arch)
    load_weights_into(directory, "embedding", embedding)
    load_weights_into(directory, "decoder", decoder)
    gen = assemble_generator(embedding, decoder)
    gen.eval()
    return gen


def train(images, labels, cfg: TrainConfig, arch: ArchitectureConfig, out_dir,
          ae_checkpoint=None, inherit_disc_trunk=False, resume_from=None):
    """Full stage-2 run; returns the trainer and writes the run directory.

    Layout: config.echo, metrics.csv (step, epoch, d_loss, g_loss, gp),
    checkpoints/epoch_<n>/.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.echo").write_text(_echo_config(cfg, arch))

    labels_np = np.asarray(labels)
    num_classes = int(labels_np.max()) + 1
    if resume_from is not None:
        trainer = load_train_checkpoint(resume_from, cfg, arch)
    else:
        torch.manual_seed(cfg.seed)
        if cfg.init_mode == "none" or ae_checkpoint is None:
            generator, discriminator = build_fresh_networks(arch, num_classes)
        else:
            generator, discriminator = init_from_stage1(
                ae_checkpoint, cfg, arch, num_classes, inherit_disc_trunk
            )
        trainer = GanTrainer(generator, discriminator, cfg, num_classes)

    x_all = images_to_tensor(images)
    y_all = torch.as_tensor(labels_np, dtype=torch.long)

    metrics_path = out_dir / "metrics.csv"
    new_log = not metrics_path.exists() or resume_from is None
    with open(metrics_path, "w" if new_log else "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_log:
            writer.writerow(["step", "epoch", "d_loss", "g_loss", "gp"])
        step = trainer.g_updates
        while trainer.epoch < cfg.epochs:
            for group in trainer.epoch_batches(x_all, y_all):
                metrics = trainer.train_step(group)
                writer.writerow([
                    step, trainer.epoch,
                    f"{metrics['d_loss']:.6f}", f"{metrics['g_loss']:.6f}",
                    f"{metrics['gp']:.6f}",
                ])
                step += 1
            trainer.epoch += 1
            if cfg.checkpoint_every and trainer.epoch % cfg.checkpoint_every == 0:
                save_train_checkpoint(
                    out_dir / "checkpoints" / f"epoch_{trainer.epoch}", trainer, arch
                )
    save_train_checkpoint(out_dir / "checkpoints" / f"epoch_{trainer.epoch}", trainer, arch)
    return trainer


def _echo_config(cfg: TrainConfig, arch: ArchitectureConfig) -> str:
    buf = io.StringIO()
    print("[train]", file=buf)
    for key in ("epochs", "seed", "batch_size", "lr", "adam_momenta", "init_mode",
                "checkpoint_every"):
        print(f"{key} = {getattr(cfg, key)}", file=buf)
    print(f"n_critic = {cfg.effective_n_critic}", file=buf)
    print("[loss]", file=buf)
    for key in ("variant", "lambda_gp", "interpolation", "bagan_gp_version"):
        print(f"{key} = {getattr(cfg.loss, key)}", file=buf)
    print("[architecture]", file=buf)
    for key in ("latent_dim", "channels", "leaky_slope", "base_width"):
        print(f"{key} = {getattr(arch, key)}", file=buf)
    return buf.getvalue()
