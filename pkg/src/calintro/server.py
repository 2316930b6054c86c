"""Read-only HTTP JSON API over trained artifacts.

The service exposes the validation workflow behind the explorer UI: sample
listings with per-sample entropy, full sample detail (image, latent, softmax,
interval), counterfactual generation, and reliability curves. All model
state is frozen at startup; every numeric a client sees is reproducible by a
CLI invocation with the same ids and seeds.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import data as data_mod
from . import evaluation as ev
from . import nnet, vae as vae_mod
from .counterfactual import CfRequest, generate_evidence
from .errors import ConfigError
from .predictor import TrainedPredictor, entropy_of, softmax_batch


@dataclass
class ServeState:
    vae: vae_mod.VaeModel
    models: dict[str, object]          # id -> TrainedPredictor | BaselinePredictor
    ids: list[str]
    labels: np.ndarray
    latents: np.ndarray
    num_classes: int
    dataset_id: str = "dataset"
    images: dict[str, np.ndarray] = field(default_factory=dict)
    default_model: str = ""

    def __post_init__(self):
        if not self.models:
            raise ConfigError("serving requires at least one trained predictor")
        if not self.default_model:
            self.default_model = next(iter(self.models))
        self.index_of = {sid: i for i, sid in enumerate(self.ids)}


def _split_params(model) -> tuple[float, int]:
    split = model.meta.get("split", {}) if hasattr(model, "meta") else {}
    return float(split.get("val_frac", 0.2)), int(split.get("seed", 0))


def _split_indices(state: ServeState, model) -> tuple[np.ndarray, np.ndarray]:
    val_frac, seed = _split_params(model)
    return data_mod.split_indices(state.labels, val_frac=val_frac, seed=seed)


def _error(status: int, message: str, fieldname: str | None = None) -> JSONResponse:
    body: dict = {"error": message}
    if fieldname is not None:
        body["field"] = fieldname
    return JSONResponse(body, status_code=status)


def _image_payload(img: np.ndarray) -> dict:
    raw = np.ascontiguousarray(img, dtype="<f4").tobytes()
    return {"b64": base64.b64encode(raw).decode("ascii"),
            "shape": list(img.shape), "dtype": "float32-le"}


def _sample_image(state: ServeState, sid: str, latent: np.ndarray) -> np.ndarray:
    if sid in state.images:
        return state.images[sid].astype(np.float64)
    return vae_mod.decode(state.vae, latent)


def build_app(state: ServeState) -> FastAPI:
    app = FastAPI(title="calintro", docs_url=None, redoc_url=None)

    @app.get("/api/models")
    def models():
        kinds = {mid: ("predictor" if isinstance(m, TrainedPredictor) else "baseline")
                 for mid, m in state.models.items()}
        return {
            "models": [{"id": mid, "kind": kinds[mid]} for mid in state.models],
            "default_model": state.default_model,
            "dataset_id": state.dataset_id,
            "dataset": {"n": len(state.ids), "num_classes": state.num_classes,
                        "latent_dim": state.latents.shape[1]},
            "vae": {"d": state.vae.d, "image_shape": list(state.vae.image_shape)},
        }

    @app.get("/api/samples")
    def samples(split: str = "val", model: str = ""):
        mid = model or state.default_model
        if mid not in state.models:
            return _error(404, f"unknown model {mid!r}")
        if split not in ("train", "val", "all"):
            return _error(400, f"unknown split {split!r}", "split")
        mdl = state.models[mid]
        train_idx, val_idx = _split_indices(state, mdl)
        idx = {"train": train_idx, "val": val_idx,
               "all": np.arange(len(state.ids))}[split]
        logits = mdl.logits(state.latents[idx])
        rho = softmax_batch(logits)
        ent = entropy_of(rho)
        predicted = logits.argmax(axis=1)
        rows = []
        for j, i in enumerate(idx):
            rows.append({
                "id": state.ids[i],
                "class_id": int(state.labels[i]),
                "entropy": float(ent[j]),
                "predicted": int(predicted[j]),
                "correct": bool(predicted[j] == state.labels[i]),
            })
        return {"model_id": mid, "dataset_id": state.dataset_id,
                "split": split, "samples": rows}

    @app.get("/api/sample/{sid}")
    def sample(sid: str, model: str = ""):
        mid = model or state.default_model
        if mid not in state.models:
            return _error(404, f"unknown model {mid!r}")
        if sid not in state.index_of:
            return _error(404, f"unknown sample {sid!r}")
        i = state.index_of[sid]
        mdl = state.models[mid]
        z = state.latents[i]
        logits = mdl.logits(z)[0]
        rho = softmax_batch(logits)[0]
        body = {
            "id": sid,
            "model_id": mid,
            "dataset_id": state.dataset_id,
            "class_id": int(state.labels[i]),
            "latent": z.tolist(),
            "softmax": rho.tolist(),
            "entropy": float(entropy_of(rho)[0]),
            "predicted": int(np.argmax(logits)),
            "image": _image_payload(_sample_image(state, sid, z)),
        }
        if hasattr(mdl, "intervals"):
            y_hat, delta = mdl.intervals(z)
            body["interval"] = {"y_hat": y_hat[0].tolist(), "delta": delta[0].tolist()}
        return body

    @app.post("/api/counterfactual")
    async def counterfactual(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "body must be JSON", None)
        if not isinstance(payload, dict):
            return _error(400, "body must be a JSON object", None)

        mid = payload.get("model_id") or state.default_model
        if mid not in state.models:
            return _error(404, f"unknown model {mid!r}")
        mdl = state.models[mid]
        if not isinstance(mdl, TrainedPredictor):
            return _error(400, f"model {mid!r} has no width head", "model_id")
        sid = payload.get("sample_id")
        if not isinstance(sid, str) or sid not in state.index_of:
            return _error(404, f"unknown sample {sid!r}")

        fields = {"eta1": 0.1, "eta2": 0.5, "eta3": 0.2, "max_iters": 300,
                  "lr": 0.05, "seed": 0, "entropy_sign": "minimize"}
        for name, default in fields.items():
            if name in payload:
                fields[name] = payload[name]
        for name in ("eta1", "eta2", "eta3", "lr"):
            try:
                fields[name] = float(fields[name])
            except (TypeError, ValueError):
                return _error(400, f"{name} must be a number", name)
            if name != "lr" and fields[name] < 0:
                return _error(400, f"{name} must be non-negative", name)
        try:
            fields["max_iters"] = int(fields["max_iters"])
            fields["seed"] = int(fields["seed"])
        except (TypeError, ValueError):
            return _error(400, "max_iters and seed must be integers", "max_iters")
        if fields["max_iters"] < 1:
            return _error(400, "max_iters must be >= 1", "max_iters")
        if fields["entropy_sign"] not in ("minimize", "maximize"):
            return _error(400, "entropy_sign must be minimize or maximize", "entropy_sign")

        i = state.index_of[sid]
        anchor = state.latents[i]
        req = CfRequest(z_t=anchor, **fields)
        truth = int(state.labels[i])
        result = generate_evidence(req, mdl, state.vae, truth=truth)

        anchor_logits = mdl.logits(anchor)[0]
        anchor_rho = softmax_batch(anchor_logits)[0]
        return {
            "model_id": mid,
            "dataset_id": state.dataset_id,
            "sample_id": sid,
            "request": fields,
            "z_hat": result.z_hat.tolist(),
            "image": _image_payload(result.image),
            "rho": result.rho.tolist(),
            "entropy": result.entropy,
            "predicted": result.predicted,
            "correct": result.correct,
            "ae_z": result.ae_z,
            "ssim": result.ssim,
            "objective_trace": result.objective_trace,
            "anchor": {
                "entropy": float(entropy_of(anchor_rho)[0]),
                "predicted": int(np.argmax(anchor_logits)),
                "rho": anchor_rho.tolist(),
                "class_id": truth,
            },
        }

    @app.get("/api/reliability")
    def reliability(model: str = ""):
        mid = model or state.default_model
        if mid not in state.models:
            return _error(404, f"unknown model {mid!r}")
        mdl = state.models[mid]
        _, val_idx = _split_indices(state, mdl)
        logits = mdl.logits(state.latents[val_idx])
        rho = softmax_batch(logits)
        curve = ev.reliability_curve(entropy_of(rho), logits.argmax(axis=1),
                                     state.labels[val_idx], predictor_id=mid)
        return {"model_id": mid, "dataset_id": state.dataset_id,
                "fractions": curve.fractions, "accuracies": curve.accuracies}

    return app


def mount_ui(app: FastAPI, ui_dir: str) -> None:
    from fastapi.staticfiles import StaticFiles
    app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
