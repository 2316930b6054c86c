"""Command-line workflow: data generation, training, evaluation, serving.

Subcommands: gen-data, train-vae, train-predictor, train-baseline, eval,
counterfact, serve. Exit codes: 0 success, 2 configuration/usage error,
3 runtime or numerical error. Every stochastic subcommand takes --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation as ev
from . import vae as vae_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .counterfactual import sweep_eta1
from .errors import (CalintroError, CheckpointError, ConfigError, NumericalError,
                     ParseError)
from .predictor import (BaselineConfig, CalibConfig, TrainedPredictor,
                        entropy_of, softmax_batch, train_alternating,
                        train_ce_baseline, training_log_csv)
from .server import ServeState, build_app, mount_ui


def _write_pgm(path, img: np.ndarray) -> None:
    gray = np.clip(img.mean(axis=2), 0.0, 1.0)
    pixels = np.round(gray * 255.0).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def _write_f32(path, img: np.ndarray) -> None:
    Path(path).write_bytes(np.ascontiguousarray(img, dtype="<f4").tobytes())


def cmd_gen_data(args) -> int:
    samples, manifest = data_mod.generate_dataset(
        n=args.n, num_classes=args.classes, image_size=args.size,
        seed=args.seed, label_noise=args.label_noise)
    data_mod.save_dataset(samples, manifest, args.out)
    print(f"wrote {manifest.n} samples ({manifest.height}x{manifest.width}x3, "
          f"{manifest.num_classes} classes) to {args.out}")
    return 0


def cmd_train_vae(args) -> int:
    samples, manifest = data_mod.load_dataset(args.data)
    images = data_mod.images_matrix(samples)
    config = vae_mod.VaeConfig(
        d=args.d, epochs=args.epochs, batch=args.batch, lr=args.lr,
        lambda_od=args.lambda_od, lambda_d=args.lambda_d, beta=args.beta,
        seed=args.seed)
    model = vae_mod.train_vae(images, config,
                              (manifest.height, manifest.width, manifest.channels))
    save_checkpoint(model, args.out)
    print(f"trained autoencoder (final loss "
          f"{model.train_log[-1]['loss']:.6f}) -> {args.out}")
    if args.latents_out:
        mus, _ = vae_mod.encode_batch(model, images)
        ids = [s.id for s in samples]
        labels = data_mod.class_ids(samples)
        data_mod.save_latent_csv(args.latents_out, ids, labels, mus)
        print(f"wrote latent table -> {args.latents_out}")
    if args.stats_out:
        stats = vae_mod.latent_stats(model, images, data_mod.class_ids(samples))
        Path(args.stats_out).write_text(json.dumps(stats, indent=2, sort_keys=True))
        print(f"wrote per-class latent stats -> {args.stats_out}")
    return 0


def _load_latents(args):
    ids, labels, z = data_mod.load_latent_csv(args.latents)
    return ids, labels, z


def cmd_train_predictor(args) -> int:
    ids, labels, z = _load_latents(args)
    k = int(labels.max()) + 1
    train_idx, _ = data_mod.split_indices(labels, val_frac=args.val_frac,
                                          seed=args.split_seed)
    targets = np.stack([data_mod.encode_label(c, k) for c in labels])
    config = CalibConfig(alpha=args.alpha, tau=args.tau, lr_f=args.lr_f,
                         lr_g=args.lr_g, epochs=args.epochs, batch=args.batch,
                         s=args.temp_s, seed=args.seed)
    model = train_alternating(z[train_idx], targets[train_idx], config)
    model.meta = {
        "split": {"val_frac": args.val_frac, "seed": args.split_seed},
        "latents": str(args.latents),
        "num_classes": k,
    }
    save_checkpoint(model, args.out)
    log_path = args.log_out or (str(args.out) + ".log.csv")
    Path(log_path).write_text(training_log_csv(model.train_log))
    last = model.train_log[-1]
    print(f"trained calibrated predictor in {len(model.train_log)} rounds "
          f"(hinge {last['hinge']:.4f}, calib err {last['hard_calib_error']:.4f}, "
          f"train acc {last['accuracy']:.3f}) -> {args.out}")
    return 0


def cmd_train_baseline(args) -> int:
    ids, labels, z = _load_latents(args)
    train_idx, _ = data_mod.split_indices(labels, val_frac=args.val_frac,
                                          seed=args.split_seed)
    config = BaselineConfig(lr=args.lr, epochs=args.epochs, batch=args.batch,
                            seed=args.seed)
    model = train_ce_baseline(z[train_idx], labels[train_idx], config)
    model.meta = {
        "split": {"val_frac": args.val_frac, "seed": args.split_seed},
        "latents": str(args.latents),
        "num_classes": int(labels.max()) + 1,
    }
    save_checkpoint(model, args.out)
    log_path = args.log_out or (str(args.out) + ".log.csv")
    Path(log_path).write_text(training_log_csv(model.train_log))
    last = model.train_log[-1]
    print(f"trained cross-entropy baseline for {len(model.train_log)} epochs "
          f"(train acc {last['accuracy']:.3f}) -> {args.out}")
    return 0


def _eval_one(model, model_id, z, labels, val_idx, alpha, out_dir) -> None:
    report = ev.evaluate(model, z[val_idx], labels[val_idx],
                         ev.EvalConfig(alpha=alpha, predictor_id=model_id))
    out = Path(out_dir)
    (out / f"report_{model_id}.json").write_text(ev.report_to_json(report))
    (out / f"curve_{model_id}.csv").write_text(ev.curve_to_csv(report.curve))
    print(f"{model_id}: accuracy {report.plain_accuracy:.3f}, "
          f"macro {report.macro_accuracy:.3f}, wAUC {report.weighted_auc:.3f}")


def cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    if not isinstance(model, TrainedPredictor):
        raise ConfigError(f"{args.model} is not a calibrated-predictor checkpoint")
    ids, labels, z = _load_latents(args)
    split = model.meta.get("split", {})
    val_frac = args.val_frac if args.val_frac is not None else split.get("val_frac", 0.2)
    split_seed = args.split_seed if args.split_seed is not None else split.get("seed", 0)
    _, val_idx = data_mod.split_indices(labels, val_frac=val_frac, seed=split_seed)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    _eval_one(model, "model", z, labels, val_idx, args.alpha, args.out)
    if args.baseline:
        baseline = load_checkpoint(args.baseline)
        _eval_one(baseline, "baseline", z, labels, val_idx, args.alpha, args.out)
    return 0


def cmd_counterfact(args) -> int:
    model = load_checkpoint(args.model)
    if not isinstance(model, TrainedPredictor):
        raise ConfigError(f"{args.model} is not a calibrated-predictor checkpoint")
    vae = load_checkpoint(args.vae)
    if not isinstance(vae, vae_mod.VaeModel):
        raise ConfigError(f"{args.vae} is not an autoencoder checkpoint")
    ids, labels, z = _load_latents(args)
    if args.id not in ids:
        raise ConfigError(f"sample id {args.id!r} not present in {args.latents}")
    i = ids.index(args.id)
    anchor = z[i]
    truth = int(labels[i])

    if args.eta1_grid and args.eta1_grid.strip():
        try:
            grid = [float(v) for v in args.eta1_grid.split(",")]
        except ValueError:
            raise ConfigError(f"--eta1-grid must be comma-separated numbers, "
                              f"got {args.eta1_grid!r}") from None
    else:
        grid = [args.eta1]
    evidences = sweep_eta1(anchor, grid, args.eta2, args.eta3, model, vae,
                           entropy_sign=args.sign, max_iters=args.iters,
                           lr=args.lr, seed=args.seed, truth=truth)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    anchor_logits = model.logits(anchor)[0]
    anchor_rho = softmax_batch(anchor_logits)[0]
    anchor_img = vae_mod.decode(vae, anchor)
    _write_f32(out / "anchor.f32", anchor_img)
    if args.dump == "pgm":
        _write_pgm(out / "anchor.pgm", anchor_img)
    anchor_info = {
        "id": args.id,
        "class_id": truth,
        "image_ref": "anchor.f32",
        "image_shape": list(anchor_img.shape),
        "rho": anchor_rho.tolist(),
        "predicted": int(np.argmax(anchor_logits)),
        "correct": bool(int(np.argmax(anchor_logits)) == truth),
        "entropy": float(entropy_of(anchor_rho)[0]),
    }
    (out / "anchor.json").write_text(json.dumps(anchor_info, indent=2, sort_keys=True))

    columns = []
    for j, evd in enumerate(evidences):
        ref = f"evidence_{j:03d}.f32"
        _write_f32(out / ref, evd.image)
        if args.dump == "pgm":
            _write_pgm(out / f"evidence_{j:03d}.pgm", evd.image)
        columns.append({
            "eta1": evd.eta1,
            "image_ref": ref,
            "image_shape": list(evd.image.shape),
            "rho": evd.rho.tolist(),
            "predicted": evd.predicted,
            "correct": evd.correct,
            "ae_z": evd.ae_z,
            "ssim": evd.ssim,
            "entropy": evd.entropy,
        })
    (out / "panel.json").write_text(json.dumps(columns, indent=2, sort_keys=True))
    print(f"wrote {len(columns)}-column evidence panel for {args.id} -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    vae = load_checkpoint(args.vae)
    if not isinstance(vae, vae_mod.VaeModel):
        raise ConfigError(f"{args.vae} is not an autoencoder checkpoint")
    models = {}
    for spec_str in args.model:
        if "=" in spec_str:
            mid, path = spec_str.split("=", 1)
        else:
            mid, path = Path(spec_str).stem, spec_str
        models[mid] = load_checkpoint(path)
    ids, labels, z = _load_latents(args)
    images = {}
    if args.data:
        samples, _ = data_mod.load_dataset(args.data)
        images = {s.id: s.image for s in samples}
    state = ServeState(vae=vae, models=models, ids=ids, labels=labels, latents=z,
                       num_classes=int(labels.max()) + 1,
                       dataset_id=Path(args.latents).stem, images=images)
    app = build_app(state)
    if args.ui_dir:
        mount_ui(app, args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calintro")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-noise", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-vae", help="train the latent autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lambda-od", type=float, default=10.0)
    p.add_argument("--lambda-d", type=float, default=5.0)
    p.add_argument("--beta", type=float, default=8e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--latents-out", default=None)
    p.add_argument("--stats-out", default=None)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("train-predictor", help="train the interval-calibrated predictor")
    p.add_argument("--latents", required=True)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--lr-f", type=float, default=3e-4)
    p.add_argument("--lr-g", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=600)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--temp-s", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log-out", default=None)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("train-baseline", help="train the cross-entropy baseline")
    p.add_argument("--latents", required=True)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log-out", default=None)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("eval", help="evaluate model (and baseline) on shared splits")
    p.add_argument("--model", required=True)
    p.add_argument("--baseline", default=None)
    p.add_argument("--latents", required=True)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--val-frac", type=float, default=None)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("counterfact", help="export a counterfactual evidence panel")
    p.add_argument("--model", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--latents", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--eta1", type=float, default=0.1)
    p.add_argument("--eta1-grid", default="0.01,0.1,1,10")
    p.add_argument("--eta2", type=float, default=0.5)
    p.add_argument("--eta3", type=float, default=0.2)
    p.add_argument("--sign", choices=["minimize", "maximize"], default="minimize")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump", choices=["none", "pgm"], default="none")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_counterfact)

    p = sub.add_parser("serve", help="serve the HTTP JSON API")
    p.add_argument("--vae", required=True)
    p.add_argument("--model", action="append", required=True,
                   help="id=path (repeatable); bare paths use the file stem as id")
    p.add_argument("--latents", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, CheckpointError, FileNotFoundError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, CalintroError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
