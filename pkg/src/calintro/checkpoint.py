"""JSON checkpoints for trained models.

Parameters are stored as decimal strings with 17 significant digits, which
round-trip float64 bit-exactly, so a saved-then-loaded model reproduces
forward outputs exactly. Checkpoints are versioned and human-inspectable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nnet import DenseNet
from .predictor import (BaselineConfig, BaselinePredictor, CalibConfig,
                        TrainedPredictor, training_log_csv)
from .vae import VaeConfig, VaeModel

SCHEMA_VERSION = 1


def _net_to_json(net: DenseNet) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "weights": [[format(v, ".17g") for v in w.reshape(-1)] for w in net.weights],
        "biases": [[format(v, ".17g") for v in b] for b in net.biases],
    }


def _net_from_json(obj: dict, where: str) -> DenseNet:
    try:
        sizes = [int(s) for s in obj["layer_sizes"]]
        raw_w = obj["weights"]
        raw_b = obj["biases"]
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{where}: missing or malformed field ({exc})") from None
    if len(raw_w) != len(sizes) - 1 or len(raw_b) != len(sizes) - 1:
        raise CheckpointError(f"{where}: expected {len(sizes) - 1} layers, "
                              f"got {len(raw_w)} weights / {len(raw_b)} biases")
    weights, biases = [], []
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        flat = raw_w[l]
        if len(flat) != fan_in * fan_out:
            raise CheckpointError(f"{where}.weights[{l}]: {len(flat)} values, "
                                  f"expected {fan_out}x{fan_in}")
        try:
            weights.append(np.array([float(v) for v in flat]).reshape(fan_out, fan_in))
        except ValueError as exc:
            raise CheckpointError(f"{where}.weights[{l}]: {exc}") from None
        if len(raw_b[l]) != fan_out:
            raise CheckpointError(f"{where}.biases[{l}]: {len(raw_b[l])} values, "
                                  f"expected {fan_out}")
        biases.append(np.array([float(v) for v in raw_b[l]]))
    return DenseNet(sizes, weights, biases)


def _log_digest(log: list[dict]) -> str:
    return hashlib.sha256(training_log_csv(log).encode()).hexdigest()


def save_checkpoint(model, path) -> None:
    if isinstance(model, VaeModel):
        body = {
            "kind": "vae",
            "d": model.d,
            "image_shape": list(model.image_shape),
            "encoder": _net_to_json(model.encoder),
            "decoder": _net_to_json(model.decoder),
            "config": _config_dict(model.config),
            "training_log_digest": _log_digest(model.train_log),
            "training_log_rows": len(model.train_log),
        }
    elif isinstance(model, TrainedPredictor):
        body = {
            "kind": "predictor",
            "f": _net_to_json(model.f),
            "g": _net_to_json(model.g),
            "config": _config_dict(model.config),
            "meta": model.meta,
            "training_log_digest": _log_digest(model.train_log),
            "training_log_rows": len(model.train_log),
        }
    elif isinstance(model, BaselinePredictor):
        body = {
            "kind": "baseline",
            "net": _net_to_json(model.net),
            "config": _config_dict(model.config),
            "meta": model.meta,
            "training_log_digest": _log_digest(model.train_log),
            "training_log_rows": len(model.train_log),
        }
    else:
        raise CheckpointError(f"cannot checkpoint object of type {type(model).__name__}")
    body["schema_version"] = SCHEMA_VERSION
    Path(path).write_text(json.dumps(body, indent=1, sort_keys=True))


def _config_dict(cfg) -> dict:
    d = asdict(cfg)
    if "hidden" in d:
        d["hidden"] = list(d["hidden"])
    return d


def _build_config(cls, obj: dict, where: str):
    try:
        kwargs = dict(obj)
        if "hidden" in kwargs:
            kwargs["hidden"] = tuple(kwargs["hidden"])
        return cls(**kwargs)
    except TypeError as exc:
        raise CheckpointError(f"{where}: bad config ({exc})") from None


def load_checkpoint(path):
    """Load a checkpoint back into its model type (vae/predictor/baseline)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read ({exc})") from None
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt JSON ({exc})") from None
    if not isinstance(body, dict):
        raise CheckpointError(f"{path}: top level must be an object")
    version = body.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: unsupported schema_version {version!r}, "
                              f"expected {SCHEMA_VERSION}")
    kind = body.get("kind")
    try:
        if kind == "vae":
            cfg = _build_config(VaeConfig, body["config"], "config")
            return VaeModel(
                encoder=_net_from_json(body["encoder"], "encoder"),
                decoder=_net_from_json(body["decoder"], "decoder"),
                d=int(body["d"]),
                image_shape=tuple(body["image_shape"]),
                config=cfg,
            )
        if kind == "predictor":
            cfg = _build_config(CalibConfig, body["config"], "config")
            return TrainedPredictor(
                f=_net_from_json(body["f"], "f"),
                g=_net_from_json(body["g"], "g"),
                config=cfg,
                meta=dict(body.get("meta", {})),
            )
        if kind == "baseline":
            cfg = _build_config(BaselineConfig, body["config"], "config")
            return BaselinePredictor(
                net=_net_from_json(body["net"], "net"),
                config=cfg,
                meta=dict(body.get("meta", {})),
            )
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing field {exc}") from None
    raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")
