"""Session-scoped fixtures: a miniature stack for structural tests and the
full desk-scale stack that the acceptance criteria run against."""

import numpy as np
import pytest

from calintro import data, vae
from calintro import predictor as pr

# the fixed-seed desk-scale configuration the acceptance suite runs at
STACK = {
    "n": 2000,
    "num_classes": 7,
    "image_size": 32,
    "data_seed": 20240,
    "label_noise": 0.05,
    "d": 10,
    "vae_epochs": 60,
    "vae_beta": 8e-5,
    "vae_seed": 11,
    "val_frac": 0.2,
    "split_seed": 7,
    "alpha": 0.7,
    "tau": 0.05,
    "predictor_epochs": 600,
    "predictor_seed": 11,
    "baseline_epochs": 150,
    "baseline_seed": 5,
}


@pytest.fixture(scope="session")
def full_stack():
    """Dataset, decorrelated + plain autoencoders, latents, predictor, baseline."""
    samples, manifest = data.generate_dataset(
        STACK["n"], num_classes=STACK["num_classes"],
        image_size=STACK["image_size"], seed=STACK["data_seed"],
        label_noise=STACK["label_noise"])
    images = data.images_matrix(samples)
    labels = data.class_ids(samples)
    shape = (STACK["image_size"], STACK["image_size"], 3)

    vae_cfg = vae.VaeConfig(d=STACK["d"], epochs=STACK["vae_epochs"],
                            beta=STACK["vae_beta"], seed=STACK["vae_seed"])
    vae_model = vae.train_vae(images, vae_cfg, shape)
    plain_cfg = vae.VaeConfig(d=STACK["d"], epochs=STACK["vae_epochs"],
                              beta=STACK["vae_beta"], lambda_od=0.0, lambda_d=0.0,
                              seed=STACK["vae_seed"])
    plain_model = vae.train_vae(images, plain_cfg, shape)

    mus, _ = vae.encode_batch(vae_model, images)
    train_idx, val_idx = data.split_indices(labels, val_frac=STACK["val_frac"],
                                            seed=STACK["split_seed"])
    targets = np.stack([data.encode_label(c, STACK["num_classes"]) for c in labels])

    calib_cfg = pr.CalibConfig(alpha=STACK["alpha"], tau=STACK["tau"],
                               epochs=STACK["predictor_epochs"],
                               seed=STACK["predictor_seed"])
    predictor = pr.train_alternating(mus[train_idx], targets[train_idx], calib_cfg)
    predictor.meta = {"split": {"val_frac": STACK["val_frac"],
                                "seed": STACK["split_seed"]}}

    base_cfg = pr.BaselineConfig(epochs=STACK["baseline_epochs"],
                                 seed=STACK["baseline_seed"])
    baseline = pr.train_ce_baseline(mus[train_idx], labels[train_idx], base_cfg)
    baseline.meta = dict(predictor.meta)

    return {
        "samples": samples,
        "manifest": manifest,
        "images": images,
        "labels": labels,
        "targets": targets,
        "vae": vae_model,
        "vae_plain": plain_model,
        "latents": mus,
        "train_idx": train_idx,
        "val_idx": val_idx,
        "predictor": predictor,
        "baseline": baseline,
    }


MINI = {
    "n": 260,
    "num_classes": 3,
    "image_size": 16,
    "data_seed": 77,
    "d": 6,
    "val_frac": 0.2,
    "split_seed": 3,
}


@pytest.fixture(scope="session")
def mini_stack():
    """Small but fully wired stack for checkpoint/CLI/server tests."""
    samples, manifest = data.generate_dataset(
        MINI["n"], num_classes=MINI["num_classes"],
        image_size=MINI["image_size"], seed=MINI["data_seed"])
    images = data.images_matrix(samples)
    labels = data.class_ids(samples)
    shape = (MINI["image_size"], MINI["image_size"], 3)

    vae_cfg = vae.VaeConfig(d=MINI["d"], hidden=(128, 64), epochs=8,
                            beta=3e-5, seed=1)
    vae_model = vae.train_vae(images, vae_cfg, shape)
    mus, _ = vae.encode_batch(vae_model, images)
    targets = np.stack([data.encode_label(c, MINI["num_classes"]) for c in labels])
    train_idx, val_idx = data.split_indices(labels, val_frac=MINI["val_frac"],
                                            seed=MINI["split_seed"])

    calib_cfg = pr.CalibConfig(epochs=12, seed=2)
    predictor = pr.train_alternating(mus[train_idx], targets[train_idx], calib_cfg)
    predictor.meta = {"split": {"val_frac": MINI["val_frac"],
                                "seed": MINI["split_seed"]}}
    base_cfg = pr.BaselineConfig(epochs=12, seed=2)
    baseline = pr.train_ce_baseline(mus[train_idx], labels[train_idx], base_cfg)
    baseline.meta = dict(predictor.meta)

    ids = [s.id for s in samples]
    return {
        "samples": samples,
        "manifest": manifest,
        "images": images,
        "labels": labels,
        "ids": ids,
        "vae": vae_model,
        "latents": mus,
        "train_idx": train_idx,
        "val_idx": val_idx,
        "predictor": predictor,
        "baseline": baseline,
    }
