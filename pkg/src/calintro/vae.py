"""Variational autoencoder with a covariance-matching decorrelation penalty.

Encoder and decoder are plain MLPs (nnet.DenseNet); the encoder emits
(mu, logvar) for a d-dimensional Gaussian posterior, the decoder ends in a
sigmoid so reconstructions live in [0, 1]. On top of the usual
reconstruction + KL objective, a penalty pushes the sample covariance of the
batch posterior means toward the identity, decorrelating latent dimensions.

Per batch:  loss = mse(x, x_hat) + beta * KL(q(z|x) || N(0, I)) + dip_penalty
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nnet
from .errors import ConfigError, NumericalError, ShapeError
from .nnet import DenseNet, Gradients


@dataclass
class EncoderOutput:
    mu: np.ndarray
    logvar: np.ndarray  # clamped to +-logvar_clip


@dataclass
class VaeConfig:
    d: int = 10
    hidden: tuple[int, ...] = (512, 256, 128)
    epochs: int = 60
    batch: int = 64
    lr: float = 1e-3
    lambda_od: float = 10.0
    lambda_d: float = 5.0
    # KL weight used during training. The unweighted KL (beta=1) swamps the
    # per-pixel reconstruction term at this image size and collapses the
    # posterior; a weight near 1/(4*H*W*C) keeps the latent informative while
    # still pruning nuisance detail the classifier heads cannot use.
    beta: float = 8e-5
    seed: int = 0
    logvar_clip: float = 10.0


@dataclass
class VaeModel:
    encoder: DenseNet  # input H*W*C, output 2d
    decoder: DenseNet  # input d, output H*W*C (pre-sigmoid)
    d: int
    image_shape: tuple[int, int, int]
    config: VaeConfig
    train_log: list[dict] = field(default_factory=list)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def reparameterize(enc: EncoderOutput, noise: np.ndarray) -> np.ndarray:
    """z = mu + exp(logvar / 2) * noise for a standard-normal draw `noise`."""
    mu = np.asarray(enc.mu, dtype=np.float64)
    logvar = np.asarray(enc.logvar, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if mu.shape != logvar.shape or mu.shape != noise.shape:
        raise ShapeError(f"mu {mu.shape}, logvar {logvar.shape}, noise {noise.shape} must agree")
    return mu + np.exp(0.5 * logvar) * noise


def gaussian_kl(mu: np.ndarray, logvar: np.ndarray) -> float:
    """Closed-form KL(N(mu, diag(exp(logvar))) || N(0, I))."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return float(0.5 * np.sum(np.exp(logvar) + mu ** 2 - 1.0 - logvar))


def elbo_loss(x: np.ndarray, x_hat: np.ndarray, enc: EncoderOutput, beta: float = 1.0) -> float:
    """Mean-squared reconstruction error plus beta-weighted Gaussian KL."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x_hat = np.asarray(x_hat, dtype=np.float64).reshape(-1)
    if x.shape != x_hat.shape:
        raise ShapeError(f"image {x.shape} and reconstruction {x_hat.shape} must agree")
    mse = float(np.mean((x_hat - x) ** 2))
    return mse + beta * gaussian_kl(enc.mu, enc.logvar)


def dip_penalty(batch_mus: np.ndarray, lambda_od: float, lambda_d: float) -> float:
    """Covariance-matching penalty on a batch of posterior means.

    With C the (unbiased, B-1 normalized) sample covariance of the rows:
    lambda_od * sum_{i != j} C_ij^2 + lambda_d * sum_i (C_ii - 1)^2.
    Zero exactly when C is the identity.
    """
    mus = np.asarray(batch_mus, dtype=np.float64)
    if mus.ndim != 2 or mus.shape[0] < 2:
        raise ConfigError(f"need a batch of >= 2 mean vectors, got shape {mus.shape}")
    centered = mus - mus.mean(axis=0)
    cov = centered.T @ centered / (mus.shape[0] - 1)
    off = cov - np.diag(np.diag(cov))
    return float(lambda_od * np.sum(off ** 2) + lambda_d * np.sum((np.diag(cov) - 1.0) ** 2))


def encode(model: VaeModel, image: np.ndarray) -> EncoderOutput:
    """Deterministic posterior parameters for one image (any shape, flattened)."""
    x = np.asarray(image, dtype=np.float64).reshape(-1)
    raw = nnet.forward(model.encoder, x)
    clip = model.config.logvar_clip
    return EncoderOutput(mu=raw[:model.d],
                         logvar=np.clip(raw[model.d:], -clip, clip))


def decode(model: VaeModel, z: np.ndarray) -> np.ndarray:
    """Decode a latent vector to an H x W x C image in [0, 1]."""
    z = np.asarray(z, dtype=np.float64)
    raw = nnet.forward(model.decoder, z)
    return _sigmoid(raw).reshape(model.image_shape)


def encode_batch(model: VaeModel, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(mus, logvars) for row-stacked flattened images."""
    xs = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    raw, _ = nnet.forward_batch(model.encoder, xs)
    clip = model.config.logvar_clip
    return raw[:, :model.d], np.clip(raw[:, model.d:], -clip, clip)


def batch_loss_and_grads(encoder: DenseNet, decoder: DenseNet, xs: np.ndarray,
                         noise: np.ndarray, d: int, beta: float,
                         lambda_od: float, lambda_d: float, logvar_clip: float):
    """Full-objective value and parameter gradients for one batch.

    xs is (B, P) in [0, 1]; noise is a fixed (B, d) standard-normal draw.
    Returns (loss, parts, enc_grads, dec_grads).
    """
    B, P = xs.shape
    enc_raw, enc_cache = nnet.forward_batch(encoder, xs)
    mu = enc_raw[:, :d]
    lv_raw = enc_raw[:, d:]
    inside = (lv_raw > -logvar_clip) & (lv_raw < logvar_clip)
    lv = np.clip(lv_raw, -logvar_clip, logvar_clip)

    std = np.exp(0.5 * lv)
    z = mu + std * noise
    dec_raw, dec_cache = nnet.forward_batch(decoder, z)
    x_hat = _sigmoid(dec_raw)

    recon = float(np.sum((x_hat - xs) ** 2) / (B * P))
    kl = float(np.mean(0.5 * np.sum(np.exp(lv) + mu ** 2 - 1.0 - lv, axis=1)))
    if B >= 2:
        dip = dip_penalty(mu, lambda_od, lambda_d)
    else:
        dip = 0.0
    loss = recon + beta * kl + dip

    # reconstruction -> decoder -> z
    d_xhat = 2.0 * (x_hat - xs) / (B * P)
    d_dec_raw = d_xhat * x_hat * (1.0 - x_hat)
    dec_grads = nnet.backward_batch(decoder, dec_cache, d_dec_raw)
    dz = dec_grads.d_input

    d_mu = dz.copy()
    d_lv = dz * noise * 0.5 * std

    # KL (mean over batch)
    d_mu += beta * mu / B
    d_lv += beta * (np.exp(lv) - 1.0) / (2.0 * B)

    # decorrelation penalty on the batch of mus
    if B >= 2:
        centered = mu - mu.mean(axis=0)
        cov = centered.T @ centered / (B - 1)
        g_cov = 2.0 * lambda_od * cov
        np.fill_diagonal(g_cov, 2.0 * lambda_d * (np.diag(cov) - 1.0))
        d_centered = 2.0 * centered @ g_cov / (B - 1)
        d_mu += d_centered - d_centered.mean(axis=0)

    d_enc_raw = np.concatenate([d_mu, d_lv * inside], axis=1)
    enc_grads = nnet.backward_batch(encoder, enc_cache, d_enc_raw)

    parts = {"recon": recon, "kl": kl, "dip": dip}
    return loss, parts, enc_grads, dec_grads


def train_vae(images: np.ndarray, config: VaeConfig,
              image_shape: tuple[int, int, int]) -> VaeModel:
    """Train on row-stacked images (N, H*W*C); deterministic given config.seed."""
    images = np.asarray(images, dtype=np.float64)
    if images.size == 0:
        raise ConfigError("empty dataset")
    xs = images.reshape(len(images), -1)
    P = xs.shape[1]
    if P != int(np.prod(image_shape)):
        raise ShapeError(f"images have {P} values, image_shape {image_shape} expects "
                         f"{int(np.prod(image_shape))}")

    encoder = nnet.init_net([P, *config.hidden, 2 * config.d], seed=config.seed)
    decoder = nnet.init_net([config.d, *reversed(config.hidden), P], seed=config.seed + 1)
    enc_adam = nnet.init_adam(encoder, config.lr)
    dec_adam = nnet.init_adam(decoder, config.lr)
    rng = np.random.default_rng(config.seed + 2)

    log: list[dict] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(xs))
        total, total_parts = 0.0, {"recon": 0.0, "kl": 0.0, "dip": 0.0}
        n_batches = 0
        for start in range(0, len(xs), config.batch):
            idx = order[start:start + config.batch]
            if len(idx) < 2:
                continue  # dip penalty needs >= 2 rows; tail singleton is skipped
            noise = rng.standard_normal((len(idx), config.d))
            loss, parts, enc_g, dec_g = batch_loss_and_grads(
                encoder, decoder, xs[idx], noise, config.d, config.beta,
                config.lambda_od, config.lambda_d, config.logvar_clip)
            if not np.isfinite(loss):
                raise NumericalError(f"training diverged at epoch {epoch}: loss={loss}")
            nnet.adam_step_inplace(encoder, enc_g, enc_adam)
            nnet.adam_step_inplace(decoder, dec_g, dec_adam)
            total += loss
            for k in total_parts:
                total_parts[k] += parts[k]
            n_batches += 1
        row = {"epoch": epoch, "loss": total / n_batches}
        row.update({k: v / n_batches for k, v in total_parts.items()})
        log.append(row)

    return VaeModel(encoder=encoder, decoder=decoder, d=config.d,
                    image_shape=tuple(image_shape), config=config, train_log=log)


def latent_stats(model: VaeModel, images: np.ndarray, labels) -> dict:
    """Per-class mean/variance of the posterior means, for latent-space plots."""
    mus, _ = encode_batch(model, images)
    labels = np.asarray(labels, dtype=int)
    stats = {}
    for c in np.unique(labels):
        rows = mus[labels == c]
        stats[int(c)] = {
            "count": int(len(rows)),
            "mean": rows.mean(axis=0).tolist(),
            "var": rows.var(axis=0).tolist(),
        }
    return stats


def mean_offdiag_abs(mus: np.ndarray) -> float:
    """Mean absolute off-diagonal entry of the sample covariance of rows."""
    mus = np.asarray(mus, dtype=np.float64)
    centered = mus - mus.mean(axis=0)
    cov = centered.T @ centered / (len(mus) - 1)
    d = cov.shape[0]
    off = np.abs(cov[~np.eye(d, dtype=bool)])
    return float(off.mean())
