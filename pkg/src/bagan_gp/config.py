"""Declarative run configuration: an INI-style key-value file with sections
mirroring the module config types. Parsing is strict: unknown sections or
keys are rejected with the offending name, and value errors carry the
section and key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .losses import LossConfig
from .networks import ArchitectureConfig
from .training import TrainConfig

_SCHEMA = {
    "dataset": {"name", "class_names", "source", "height", "width", "channels"},
    "schedule": {"file"},
    "architecture": {"latent_dim", "leaky_slope", "base_width"},
    "train": {"epochs", "seed", "batch_size", "lr", "beta1", "beta2", "n_critic",
              "init_mode", "checkpoint_every", "inherit_disc_trunk"},
    "loss": {"variant", "lambda_gp", "interpolation", "version"},
    "eval": {"extractor", "extractor_weights", "grid_rows", "samples_per_class",
             "extractor_epochs"},
    "output": {"dir"},
}


@dataclass
class RunConfig:
    dataset_name: str = "dataset"
    class_names: list[str] = field(default_factory=list)
    source: str = ""
    image_shape: tuple[int, int, int] = (64, 64, 3)
    schedule_file: str | None = None
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=1))
    eval_extractor: str = "smallconv"
    eval_extractor_weights: str | None = None
    eval_extractor_epochs: int = 10
    grid_rows: int = 3
    samples_per_class: int | None = None
    output_dir: str = "runs/default"

    def echo(self) -> str:
        """Fully resolved key-value record, written before any heavy work."""
        lines = ["[dataset]",
                 f"name = {self.dataset_name}",
                 f"class_names = {','.join(self.class_names)}",
                 f"source = {self.source}",
                 f"height = {self.image_shape[0]}",
                 f"width = {self.image_shape[1]}",
                 f"channels = {self.image_shape[2]}"]
        if self.schedule_file:
            lines += ["[schedule]", f"file = {self.schedule_file}"]
        arch = self.architecture
        lines += ["[architecture]",
                  f"latent_dim = {arch.latent_dim}",
                  f"leaky_slope = {arch.leaky_slope}",
                  f"base_width = {arch.base_width}"]
        t = self.train
        lines += ["[train]",
                  f"epochs = {t.epochs}",
                  f"seed = {t.seed}",
                  f"batch_size = {t.batch_size}",
                  f"lr = {t.lr}",
                  f"beta1 = {t.adam_momenta[0]}",
                  f"beta2 = {t.adam_momenta[1]}",
                  f"n_critic = {t.effective_n_critic}",
                  f"init_mode = {t.init_mode}",
                  f"checkpoint_every = {t.checkpoint_every}"]
        loss = t.loss
        lines += ["[loss]",
                  f"variant = {loss.variant}",
                  f"lambda_gp = {loss.lambda_gp}",
                  f"interpolation = {loss.interpolation}",
                  f"version = {loss.bagan_gp_version}",
                  "[eval]",
                  f"extractor = {self.eval_extractor}",
                  f"grid_rows = {self.grid_rows}",
                  "[output]",
                  f"dir = {self.output_dir}"]
        return "\n".join(lines) + "\n"


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}] in {path}")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}] of {path}")

    cfg = RunConfig()
    cfg.dataset_name = _get(parser, "dataset", "name", str, cfg.dataset_name)
    names = _get(parser, "dataset", "class_names", str, "")
    cfg.class_names = [n.strip() for n in names.split(",") if n.strip()]
    cfg.source = _get(parser, "dataset", "source", str, cfg.source)
    cfg.image_shape = (
        _get(parser, "dataset", "height", int, 64),
        _get(parser, "dataset", "width", int, 64),
        _get(parser, "dataset", "channels", int, 3),
    )
    cfg.schedule_file = _get(parser, "schedule", "file", str, None)

    try:
        cfg.architecture = ArchitectureConfig(
            latent_dim=_get(parser, "architecture", "latent_dim", int, 128),
            channels=cfg.image_shape[2],
            leaky_slope=_get(parser, "architecture", "leaky_slope", float, 0.2),
            base_width=_get(parser, "architecture", "base_width", int, 64),
        )
        loss = LossConfig(
            variant=_get(parser, "loss", "variant", str, "bagan_gp"),
            lambda_gp=_get(parser, "loss", "lambda_gp", float, 10.0),
            interpolation=_get(parser, "loss", "interpolation", str, "model"),
            bagan_gp_version=_get(parser, "loss", "version", str, "v3"),
        )
        cfg.train = TrainConfig(
            epochs=_get(parser, "train", "epochs", int, 1),
            seed=_get(parser, "train", "seed", int, 0),
            batch_size=_get(parser, "train", "batch_size", int, 128),
            lr=_get(parser, "train", "lr", float, 2e-4),
            adam_momenta=(
                _get(parser, "train", "beta1", float, 0.5),
                _get(parser, "train", "beta2", float, 0.9),
            ),
            n_critic=_get(parser, "train", "n_critic", int, None),
            loss=loss,
            init_mode=_get(parser, "train", "init_mode", str, "both"),
            checkpoint_every=_get(parser, "train", "checkpoint_every", int, 0),
        )
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc

    cfg.eval_extractor = _get(parser, "eval", "extractor", str, "smallconv")
    cfg.eval_extractor_weights = _get(parser, "eval", "extractor_weights", str, None)
    cfg.eval_extractor_epochs = _get(parser, "eval", "extractor_epochs", int, 10)
    cfg.grid_rows = _get(parser, "eval", "grid_rows", int, 3)
    cfg.samples_per_class = _get(parser, "eval", "samples_per_class", int, None)
    cfg.output_dir = _get(parser, "output", "dir", str, cfg.output_dir)
    return cfg
