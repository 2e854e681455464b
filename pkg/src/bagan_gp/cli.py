"""Command-line interface tying the pipeline together.

Commands: prepare-data, pretrain-ae, train-gan, generate, evaluate,
plot-latents. Every command writes its fully resolved config to the
output directory before doing any heavy work, and exits nonzero on any
contract error.
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
import torch

from . import autoencoder as ae_mod
from . import data as data_mod
from . import evaluation as eval_mod
from . import training as train_mod
from .config import RunConfig, load_run_config
from .errors import BaganGPError, ConfigError
from .losses import VARIANTS, LossConfig
from .networks import (
    build_decoder,
    build_embedding,
    build_encoder,
    read_manifest,
    tensor_to_images,
)


def _load_config(ctx) -> RunConfig:
    cfg_path = ctx.obj.get("config")
    if cfg_path is None:
        raise ConfigError("no --config given")
    cfg = load_run_config(cfg_path)
    if ctx.obj.get("seed") is not None:
        cfg.train = replace(cfg.train, seed=ctx.obj["seed"])
    if ctx.obj.get("out") is not None:
        cfg.output_dir = ctx.obj["out"]
    return cfg


def _echo_config(cfg: RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.echo").write_text(cfg.echo())


def _load_scheduled_dataset(cfg: RunConfig):
    spec = data_mod.DatasetSpec(
        name=cfg.dataset_name,
        class_names=cfg.class_names,
        image_shape=cfg.image_shape,
        source=cfg.source,
    )
    images, labels = data_mod.load_dataset(spec)
    if cfg.schedule_file:
        sched = data_mod.load_schedule_file(cfg.schedule_file)
        images, labels = data_mod.apply_schedule(images, labels, sched)
    return images, labels


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Run config file (INI-style).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default=None, help="Override the output directory.")
@click.pass_context
def main(ctx, config_path, seed, out):
    """Train and evaluate class-conditional GANs on imbalanced image data."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config_path, seed=seed, out=out)


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@main.command("prepare-data")
@click.pass_context
def cmd_prepare_data(ctx):
    """Materialize the scheduled subset as a tensor container + summary."""
    try:
        cfg = _load_config(ctx)
        out_dir = Path(cfg.output_dir)
        _echo_config(cfg, out_dir)
        images, labels = _load_scheduled_dataset(cfg)
        data_mod.save_container(out_dir / "dataset.npz", images, labels)
        counts = labels.class_counts()
        lines = ["class\tname\tcount"]
        for k, count in enumerate(counts):
            name = cfg.class_names[k] if k < len(cfg.class_names) else f"class_{k}"
            lines.append(f"{k}\t{name}\t{count}")
        summary = "\n".join(lines) + "\n"
        (out_dir / "summary.tsv").write_text(summary)
        click.echo(summary, nl=False)
    except BaganGPError as exc:
        _fail(exc)


@main.command("pretrain-ae")
@click.option("--mode", type=click.Choice(["supervised", "unsupervised"]),
              default="supervised")
@click.option("--epochs", type=int, default=None, help="Override [train] epochs.")
@click.pass_context
def cmd_pretrain_ae(ctx, mode, epochs):
    """Stage-1 autoencoder pretraining; writes a tagged checkpoint."""
    try:
        cfg = _load_config(ctx)
        n_epochs = epochs if epochs is not None else cfg.train.epochs
        if n_epochs < 1:
            raise ConfigError("epochs must be >= 1")
        out_dir = Path(cfg.output_dir)
        _echo_config(cfg, out_dir)
        images, labels = _load_scheduled_dataset(cfg)
        scaled = data_mod.preprocess(images)
        torch.manual_seed(cfg.train.seed)
        arch = cfg.architecture
        opt = ae_mod.OptimizerConfig(lr=cfg.train.lr, betas=cfg.train.adam_momenta,
                                     batch_size=cfg.train.batch_size)
        encoder = build_encoder(arch)
        decoder = build_decoder(arch)
        manifest = {"latent_dim": arch.latent_dim, "channels": arch.channels,
                    "num_classes": labels.num_classes}
        if mode == "supervised":
            embedding = build_embedding(arch, labels.num_classes)
            ae = ae_mod.SupervisedAutoencoder(encoder, embedding, decoder)
            log = ae_mod.pretrain_supervised_ae(ae, scaled, labels.labels, n_epochs,
                                                opt, seed=cfg.train.seed)
            networks = {"encoder": encoder, "embedding": embedding, "decoder": decoder}
            tag = "ae_supervised"
        else:
            log = ae_mod.pretrain_unsupervised_ae(encoder, decoder, scaled, n_epochs,
                                                  opt, seed=cfg.train.seed)
            networks = {"encoder": encoder, "decoder": decoder}
            tag = "ae_unsupervised"
        ae_mod.save_stage1_checkpoint(out_dir / "stage1", tag, networks, manifest, log)
        click.echo(f"stage-1 checkpoint written: {out_dir / 'stage1'} (tag={tag}, "
                   f"final mse={log[-1]:.6f})")
    except BaganGPError as exc:
        _fail(exc)


@main.command("train-gan")
@click.option("--variant", type=click.Choice(list(VARIANTS)),
              default=None, help="Override the loss variant.")
@click.option("--version", "gp_version", type=click.Choice(["v1", "v2", "v3"]), default=None)
@click.option("--ae-checkpoint", type=click.Path(), default=None,
              help="Stage-1 checkpoint directory (defaults to <out>/stage1).")
@click.option("--resume", type=click.Path(), default=None,
              help="Resume from a run checkpoint directory.")
@click.pass_context
def cmd_train_gan(ctx, variant, gp_version, ae_checkpoint, resume):
    """Stage-2 adversarial training; writes the run directory."""
    try:
        cfg = _load_config(ctx)
        loss = cfg.train.loss
        if variant is not None:
            loss = replace(loss, variant=variant)
        if gp_version is not None:
            loss = replace(loss, bagan_gp_version=gp_version)
        cfg.train = replace(cfg.train, loss=loss)
        out_dir = Path(cfg.output_dir)
        _echo_config(cfg, out_dir)
        images, labels = _load_scheduled_dataset(cfg)
        scaled = data_mod.preprocess(images)
        if ae_checkpoint is None and cfg.train.init_mode != "none":
            candidate = out_dir / "stage1"
            ae_checkpoint = str(candidate) if candidate.exists() else None
        train_mod.train(scaled, labels.labels, cfg.train, cfg.architecture, out_dir,
                        ae_checkpoint=ae_checkpoint, resume_from=resume)
        click.echo(f"run complete: {out_dir}")
    except BaganGPError as exc:
        _fail(exc)


@main.command("generate")
@click.argument("checkpoint", type=click.Path(exists=True))
@click.option("--class", "class_index", type=int, required=True)
@click.option("-n", "count", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.pass_context
def cmd_generate(ctx, checkpoint, class_index, count, seed):
    """Generate n images of one class from a run checkpoint."""
    try:
        cfg = _load_config(ctx)
        out_dir = Path(cfg.output_dir)
        _echo_config(cfg, out_dir)
        manifest = read_manifest(checkpoint)
        num_classes = int(manifest["num_classes"])
        if not 0 <= class_index < num_classes:
            raise ConfigError(f"class {class_index} outside [0, {num_classes})")
        gen = train_mod.generator_for_checkpoint(checkpoint, cfg.architecture)
        rng = torch.Generator().manual_seed(seed)
        z = torch.randn(count, gen.latent_dim, generator=rng)
        labels = torch.full((count,), class_index, dtype=torch.long)
        with torch.no_grad():
            images = data_mod.inverse_scale(tensor_to_images(gen(z, labels)))
        from PIL import Image

        manifest_lines = [f"seed = {seed}", f"class = {class_index}"]
        for i in range(count):
            array = images.data[i]
            array = array[:, :, 0] if array.shape[2] == 1 else array
            path = out_dir / f"gen_c{class_index}_{i:05d}.png"
            Image.fromarray(array).save(path)
            manifest_lines.append(
                f"z_{i} = " + " ".join(f"{v:.8e}" for v in z[i].numpy())
            )
        (out_dir / "generate_manifest.txt").write_text("\n".join(manifest_lines) + "\n")
        click.echo(f"wrote {count} images to {out_dir}")
    except BaganGPError as exc:
        _fail(exc)


def _make_extractor(cfg: RunConfig, images, labels):
    if cfg.eval_extractor == "pretrained":
        return eval_mod.PretrainedBackboneExtractor(cfg.eval_extractor_weights)
    return eval_mod.SmallConvExtractor.train_on(
        images, labels, epochs=cfg.eval_extractor_epochs, seed=cfg.train.seed
    )


@main.command("evaluate")
@click.argument("checkpoint", type=click.Path(exists=True))
@click.option("--grid-rows", type=int, default=None)
@click.pass_context
def cmd_evaluate(ctx, checkpoint, grid_rows):
    """Per-class FID report, conditional image grid, and dispersion CSV."""
    try:
        cfg = _load_config(ctx)
        out_dir = Path(cfg.output_dir)
        _echo_config(cfg, out_dir)
        images, labels = _load_scheduled_dataset(cfg)
        scaled = data_mod.preprocess(images)
        extractor = _make_extractor(cfg, scaled, labels)
        gen = train_mod.generator_for_checkpoint(checkpoint, cfg.architecture)
        report = eval_mod.fid_per_class(gen, scaled, labels, extractor,
                                        samples_per_class=cfg.samples_per_class,
                                        seed=cfg.train.seed)
        eval_mod.write_fid_report(out_dir / "fid.csv", report)

        rows = grid_rows if grid_rows is not None else cfg.grid_rows
        first_per_class = [np.flatnonzero(labels.labels == k)[0]
                           for k in range(labels.num_classes)]
        reals = data_mod.ImageBatch(scaled.data[first_per_class], scaled.range_tag)
        grid, metadata = eval_mod.image_grid(gen, labels.num_classes, rows,
                                             cfg.train.seed, reals)
        eval_mod.save_grid_png(out_dir / "grid.png", grid, metadata)

        gen_images, gen_labels = [], []
        rng = torch.Generator().manual_seed(cfg.train.seed)
        per_class = 64
        for k in range(labels.num_classes):
            gen_images.append(eval_mod.generate_images(gen, k, per_class, rng).data)
            gen_labels.extend([k] * per_class)
        gen_batch = data_mod.ImageBatch(np.concatenate(gen_images), data_mod.RANGE_SCALED)
        records = eval_mod.feature_projection(scaled, gen_batch, labels.labels,
                                              np.asarray(gen_labels), extractor)
        eval_mod.write_scatter(out_dir / "feature_projection.csv", records)
        click.echo(f"evaluation artifacts written to {out_dir}")
    except BaganGPError as exc:
        _fail(exc)


@main.command("plot-latents")
@click.argument("stage1_checkpoint", type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["pca", "tsne"]), default="pca")
@click.pass_context
def cmd_plot_latents(ctx, stage1_checkpoint, method):
    """Latent-dispersion diagnostic from a stage-1 checkpoint."""
    try:
        cfg = _load_config(ctx)
        out_dir = Path(cfg.output_dir)
        _echo_config(cfg, out_dir)
        images, labels = _load_scheduled_dataset(cfg)
        scaled = data_mod.preprocess(images)
        from .networks import load_weights_into

        arch = cfg.architecture
        encoder = build_encoder(arch)
        load_weights_into(stage1_checkpoint, "encoder", encoder)
        latents = ae_mod.encode_dataset(encoder, scaled)
        manifest = read_manifest(stage1_checkpoint)
        if manifest.get("tag") == "ae_supervised":
            embedding = build_embedding(arch, labels.num_classes)
            load_weights_into(stage1_checkpoint, "embedding", embedding)
            with torch.no_grad():
                vectors = embedding.module(torch.as_tensor(labels.labels)).numpy()
            latents = latents * vectors
        points, score, degenerate = eval_mod.latent_dispersion(
            latents, labels.labels, method=method, seed=cfg.train.seed
        )
        import csv as csv_mod

        with open(out_dir / "latents.csv", "w", newline="") as fh:
            writer = csv_mod.writer(fh)
            writer.writerow(["x", "y", "class"])
            for (x, y), k in zip(points, labels.labels):
                writer.writerow([f"{x:.6f}", f"{y:.6f}", int(k)])
        flag = " (degenerate geometry)" if degenerate else ""
        click.echo(f"silhouette = {score:.4f}{flag}; points in {out_dir / 'latents.csv'}")
    except BaganGPError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
