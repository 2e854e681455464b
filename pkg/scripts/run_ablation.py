#!/usr/bin/env python3
"""Ablation sweep: train the three BAGAN-GP versions over several seeds on
the toy dataset and report per-version minority-class FID medians.

Example:
    python scripts/run_ablation.py --out runs/ablation --epochs 30 --seeds 0,1,2
"""

import argparse
import time
from pathlib import Path

import numpy as np
import torch

from bagan_gp import autoencoder as ae
from bagan_gp import data, evaluation, losses, networks, toydata, training

torch.set_num_threads(1)


def stage1(version, arch, scaled, labels, epochs, seed, directory):
    torch.manual_seed(seed)
    encoder = networks.build_encoder(arch)
    decoder = networks.build_decoder(arch)
    manifest = {"latent_dim": arch.latent_dim, "channels": arch.channels,
                "num_classes": labels.num_classes}
    if version == "v3":
        embedding = networks.build_embedding(arch, labels.num_classes)
        sup = ae.SupervisedAutoencoder(encoder, embedding, decoder)
        log = ae.pretrain_supervised_ae(sup, scaled, labels.labels, epochs,
                                        ae.OptimizerConfig(batch_size=64), seed=seed)
        nets = {"encoder": encoder, "embedding": embedding, "decoder": decoder}
        tag = "ae_supervised"
    else:
        log = ae.pretrain_unsupervised_ae(encoder, decoder, scaled, epochs,
                                          ae.OptimizerConfig(batch_size=64), seed=seed)
        nets = {"encoder": encoder, "decoder": decoder}
        tag = "ae_unsupervised"
    ae.save_stage1_checkpoint(directory, tag, nets, manifest, log)
    return directory


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--ae-epochs", type=int, default=30)
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--base-width", type=int, default=8)
    parser.add_argument("--batch-size", type=int, default=32)
    args = parser.parse_args()

    out = Path(args.out)
    seeds = [int(s) for s in args.seeds.split(",")]
    arch = networks.ArchitectureConfig(latent_dim=16, channels=1,
                                       base_width=args.base_width)
    images, labels = toydata.make_similar_shapes_dataset(seed=7)
    scaled = data.preprocess(images)
    minority = [k for k in range(labels.num_classes)
                if (labels.labels == k).sum() < len(labels) / labels.num_classes]
    extractor = evaluation.SmallConvExtractor.train_on(scaled, labels, epochs=50,
                                                       lr=2e-3, seed=0, width=16)

    t0 = time.time()
    results = {}
    for version in ("v1", "v2", "v3"):
        scores = []
        for seed in seeds:
            run_dir = out / f"{version}_seed{seed}"
            s1 = stage1(version, arch, scaled, labels, args.ae_epochs, seed,
                        run_dir / "stage1")
            cfg = training.TrainConfig(
                epochs=args.epochs, seed=seed, batch_size=args.batch_size,
                loss=losses.LossConfig("bagan_gp", bagan_gp_version=version),
            )
            training.train(scaled, labels.labels, cfg, arch, run_dir / "gan",
                           ae_checkpoint=s1)
            ckpt = run_dir / "gan" / "checkpoints" / f"epoch_{args.epochs}"
            gen = training.generator_for_checkpoint(ckpt, arch)
            report = evaluation.fid_per_class(gen, scaled, labels, extractor, seed=1)
            score = float(np.mean([report.per_class[k] for k in minority]))
            scores.append(score)
            print(f"{version} seed {seed}: minority FID {score:.3f} "
                  f"[{time.time()-t0:.0f}s]", flush=True)
        results[version] = float(np.median(scores))
    print("medians:", {v: round(m, 3) for v, m in results.items()})


if __name__ == "__main__":
    main()
