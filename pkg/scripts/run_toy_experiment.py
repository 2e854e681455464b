#!/usr/bin/env python3
"""End-to-end toy experiment: supervised autoencoder pretraining, stage-2
adversarial training, then per-class FID, image grid, and latent plots.

Example (about 20 CPU-minutes at the default small scale):
    python scripts/run_toy_experiment.py --out runs/toy --epochs 100
"""

import argparse
import time
from pathlib import Path

import numpy as np
import torch

from bagan_gp import autoencoder as ae
from bagan_gp import data, evaluation, losses, networks, toydata, training

torch.set_num_threads(1)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--ae-epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--variant", default="bagan_gp")
    parser.add_argument("--version", default="v3", choices=["v1", "v2", "v3"])
    parser.add_argument("--base-width", type=int, default=8)
    parser.add_argument("--latent-dim", type=int, default=16)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()

    arch = networks.ArchitectureConfig(latent_dim=args.latent_dim, channels=1,
                                       base_width=args.base_width)
    images, labels = toydata.make_similar_shapes_dataset(seed=7)
    scaled = data.preprocess(images)

    # stage 1: v3 uses the supervised (embedding) autoencoder, v1/v2 the plain one
    torch.manual_seed(args.seed)
    encoder = networks.build_encoder(arch)
    decoder = networks.build_decoder(arch)
    manifest = {"latent_dim": arch.latent_dim, "channels": arch.channels,
                "num_classes": labels.num_classes}
    if args.version == "v3":
        embedding = networks.build_embedding(arch, labels.num_classes)
        sup = ae.SupervisedAutoencoder(encoder, embedding, decoder)
        log = ae.pretrain_supervised_ae(sup, scaled, labels.labels, args.ae_epochs,
                                        ae.OptimizerConfig(batch_size=64), seed=args.seed)
        nets = {"encoder": encoder, "embedding": embedding, "decoder": decoder}
        tag = "ae_supervised"
    else:
        log = ae.pretrain_unsupervised_ae(encoder, decoder, scaled, args.ae_epochs,
                                          ae.OptimizerConfig(batch_size=64), seed=args.seed)
        nets = {"encoder": encoder, "decoder": decoder}
        tag = "ae_unsupervised"
    ae.save_stage1_checkpoint(out / "stage1", tag, nets, manifest, log)
    print(f"stage 1 done: mse {log[0]:.4f} -> {log[-1]:.4f}  [{time.time()-t0:.0f}s]")

    # stage 2
    cfg = training.TrainConfig(
        epochs=args.epochs, seed=args.seed, batch_size=32,
        loss=losses.LossConfig(variant=args.variant, bagan_gp_version=args.version),
    )
    trainer = training.train(scaled, labels.labels, cfg, arch, out / "gan",
                             ae_checkpoint=out / "stage1")
    print(f"stage 2 done: {trainer.g_updates} generator updates  [{time.time()-t0:.0f}s]")

    # evaluation
    ckpt = out / "gan" / "checkpoints" / f"epoch_{args.epochs}"
    gen = training.generator_for_checkpoint(ckpt, arch)
    extractor = evaluation.SmallConvExtractor.train_on(scaled, labels, epochs=50,
                                                       lr=2e-3, seed=0, width=16)
    report = evaluation.fid_per_class(gen, scaled, labels, extractor, seed=1)
    evaluation.write_fid_report(out / "fid.csv", report)
    print("per-class FID:", {k: round(v, 3) for k, v in report.per_class.items()})

    firsts = [np.flatnonzero(labels.labels == k)[0] for k in range(labels.num_classes)]
    reals = data.ImageBatch(scaled.data[firsts], scaled.range_tag)
    grid, metadata = evaluation.image_grid(gen, labels.num_classes, rows=4,
                                           seed=args.seed, real_examples=reals)
    evaluation.save_grid_png(out / "grid.png", grid, metadata)
    print(f"artifacts in {out}  [{time.time()-t0:.0f}s total]")


if __name__ == "__main__":
    main()
